import numpy as np
import pytest
from helpers import gradient_check

from scoremem.dynamics import generate_samples, integrate_reverse_ode, TimeGrid
from scoremem.errors import ConfigError, SingularTimeError, TrainingDivergedError
from scoremem.neural import (FourierTimeEmbedding, Loss, NeuralScore, ScoreNet, TrainConfig,
                             load_checkpoint, loss_sample, neural_score_model,
                             save_checkpoint, train, write_loss_history)
from scoremem.scores import Dataset, tikhonov_score


def test_param_count():
    net = ScoreNet.init(2, 8, 0)
    assert net.theta.size == ScoreNet.param_count(2, 8) == (2 + 17) * 8 + 9 * 8 + 9 * 2


def test_embedding():
    emb = FourierTimeEmbedding([0.5, -1.0])
    out = emb(0.25)
    arg = 2 * np.pi * 0.25 * np.array([0.5, -1.0])
    assert np.allclose(out, np.concatenate([np.sin(arg), np.cos(arg)]))
    assert np.allclose((emb(np.linspace(0, 1, 7)) ** 2).sum(-1), 2.0)
    e8 = FourierTimeEmbedding.random(np.random.default_rng(0))
    assert e8.dim == 16
    with pytest.raises(ValueError):
        e8.frequencies[0] = 1.0


def test_zero_network_outputs_zero():
    net = ScoreNet(2, 8, FourierTimeEmbedding(np.ones(8)))
    assert np.array_equal(net.forward(np.ones((3, 2)), 0.3), np.zeros((3, 2)))


def test_single_neuron_hand_computation():
    emb = FourierTimeEmbedding([0.25] + [0.0] * 7)
    net = ScoreNet(1, 1, emb)
    W1, b1, W2, b2, W3, b3 = net.layers()
    W1[0, 0], W1[1, 0] = 2.0, 1.0      # x and sin(2 pi f t) feed the neuron
    W1[9, 0] = -0.5                    # cos(2 pi f t)
    b1[0], W2[0, 0], b2[0] = 0.1, 3.0, -0.2
    W3[0, 0], b3[0] = -1.5, 0.4
    x, t = 0.7, 1.0                    # sin(pi/2) = 1, cos(pi/2) = 0
    h1 = max(2.0 * x + 1.0 * 1.0 - 0.5 * 0.0 + 0.1, 0.0)
    h2 = max(3.0 * h1 - 0.2, 0.0)
    # the zero-frequency features contribute sin(0) = 0 and cos(0) = 1 with zero weight
    assert net.forward(np.array([x]), t)[0] == pytest.approx(-1.5 * h2 + 0.4, rel=1e-14)


def test_batch_and_single_agree():
    net = ScoreNet.init(2, 16, 1)
    X = np.random.default_rng(0).standard_normal((5, 2))
    B = net.forward(X, 0.4)
    for i in range(5):
        assert np.allclose(B[i], net.forward(X[i], 0.4), rtol=1e-15, atol=1e-15)


@pytest.mark.parametrize("loss", ["score_matching", "denoising"])
def test_zero_network_loss_is_noise_norm(vp, loss):
    cfg = TrainConfig(loss=loss)
    net = ScoreNet(2, 4, FourierTimeEmbedding(np.ones(8)), mode=cfg.mode)
    eta = np.array([0.3, -1.2])
    val, _ = loss_sample(net, vp, [0.5, 0.5], 0.6, eta, cfg)
    assert val == pytest.approx(float(eta @ eta), rel=1e-14)


@pytest.mark.parametrize("loss,c", [("score_matching", 0.0), ("denoising", 0.0),
                                    ("tikhonov", 0.05)])
def test_gradient_matches_finite_differences(vp, loss, c):
    assert gradient_check(vp, loss, c) <= 1e-4


def test_tikhonov_penalty_is_additive(vp):
    net = ScoreNet.init(2, 8, 3)
    x0, t, eta = np.array([0.1, 0.2]), 0.3, np.array([1.0, -0.5])
    base, g0 = loss_sample(net, vp, x0, t, eta, TrainConfig())
    reg, g1 = loss_sample(net, vp, x0, t, eta, TrainConfig(loss="tikhonov", c=0.2))
    x = vp.mean_coeff(t) * x0 + vp.std(t) * eta
    s = net.forward(x, t)
    assert reg - base == pytest.approx(0.2 * float(s @ s), rel=1e-12)


def test_j0_of_s_equals_i0_of_sigma_s(vp):
    t = 0.45
    net = ScoreNet.init(2, 8, 5)
    tilde = net.copy()
    tilde.mode = "noise"
    _, _, _, _, W3, b3 = tilde.layers()
    W3 *= vp.std(t)
    b3 *= vp.std(t)
    x0, eta = np.array([0.4, -0.3]), np.array([0.2, 0.9])
    j0, _ = loss_sample(net, vp, x0, t, eta, TrainConfig(loss="score_matching"))
    i0, _ = loss_sample(tilde, vp, x0, t, eta, TrainConfig(loss="denoising"))
    assert j0 == pytest.approx(i0, rel=1e-12)


def test_j_losses_singular_at_zero(vp):
    net = ScoreNet.init(2, 4, 0)
    with pytest.raises(SingularTimeError):
        loss_sample(net, vp, [0, 0], 0.0, [1, 1], TrainConfig())
    noise = ScoreNet.init(2, 4, 0, mode="noise")
    val, _ = loss_sample(noise, vp, [0, 0], 0.0, [1, 1], TrainConfig(loss="denoising"))
    assert np.isfinite(val)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(loss="tikhonov", c=0.0)
    assert TrainConfig(loss="denoising").t_lo == 0.0
    assert TrainConfig().t_lo == 1e-5
    assert TrainConfig(loss="denoising").mode == "noise"


def test_mode_mismatch_rejected(data20, vp):
    with pytest.raises(ConfigError):
        train(ScoreNet.init(2, 4, 0), data20, vp, TrainConfig(loss="denoising", epochs=1))


def test_batch_size_must_divide(data20, vp):
    with pytest.raises(ConfigError):
        train(ScoreNet.init(2, 4, 0), data20, vp, TrainConfig(epochs=1, batch_size=3))
    _, hist = train(ScoreNet.init(2, 4, 0), data20, vp, TrainConfig(epochs=3, batch_size=5))
    assert hist.shape == (3,)


def test_training_reduces_loss(data20, vp):
    _, hist = train(ScoreNet.init(2, 32, 0), data20, vp, TrainConfig(epochs=5000, seed=1))
    assert hist[-100:].mean() <= 0.9 * hist[:100].mean()


def test_training_is_deterministic(data20, vp):
    a, ha = train(ScoreNet.init(2, 16, 2), data20, vp, TrainConfig(epochs=1500, seed=4))
    b, hb = train(ScoreNet.init(2, 16, 2), data20, vp, TrainConfig(epochs=1500, seed=4))
    assert np.array_equal(a.theta, b.theta) and np.array_equal(ha, hb)


def test_checkpoints_do_not_perturb_training(data20, vp):
    cfg = TrainConfig(epochs=2500, seed=4)
    seen = {}
    a, _ = train(ScoreNet.init(2, 8, 2), data20, vp, cfg, checkpoints=[300, 1000],
                 on_checkpoint=lambda e, n: seen.setdefault(e, n.theta.copy()))
    b, _ = train(ScoreNet.init(2, 8, 2), data20, vp, cfg)
    assert np.array_equal(a.theta, b.theta)
    # the first 1000-epoch draw chunk is shared with any run of at least that length
    d, _ = train(ScoreNet.init(2, 8, 2), data20, vp, TrainConfig(epochs=1000, seed=4))
    assert sorted(seen) == [300, 1000]
    assert np.array_equal(seen[1000], d.theta)
    assert not np.array_equal(seen[300], seen[1000])


def test_divergence_raises_with_epoch(vp):
    huge = Dataset([[1e200, 1e200], [-1e200, 1e200]])
    with pytest.raises(TrainingDivergedError) as info:
        train(ScoreNet.init(2, 4, 0), huge, vp, TrainConfig(epochs=5))
    assert info.value.epoch == 0


def test_tikhonov_net_approximates_tikhonov_score(data20, vp):
    c = 0.1
    net = ScoreNet.init(2, 64, 0)
    train(net, data20, vp, TrainConfig(loss="tikhonov", c=c, epochs=20000, seed=0))
    rng = np.random.default_rng(9)
    errs = []
    for t in np.linspace(0.05, 1.0, 20):
        idx = rng.integers(0, 20, 50)
        X = vp.mean_coeff(t) * data20.points[idx] + vp.std(t) * rng.standard_normal((50, 2))
        ref = tikhonov_score(data20, vp, X, t, c)
        errs.append(np.linalg.norm(net.forward(X, t) - ref, axis=1) / np.linalg.norm(ref, axis=1))
    assert np.median(errs) <= 0.2


def test_neural_score_wrapper(vp):
    net = ScoreNet.init(2, 8, 0)
    X = np.ones((2, 2))
    model = neural_score_model(net, vp)
    assert np.array_equal(model(X, 0.3), net.forward(X, 0.3))
    assert model.regular_at_zero() and model.dim == 2
    noise = ScoreNet.init(2, 8, 0, mode="noise")
    nm = NeuralScore(noise, vp)
    assert np.allclose(nm(X, 0.3), noise.forward(X, 0.3) / vp.std(0.3))
    assert not nm.regular_at_zero()
    with pytest.raises(SingularTimeError):
        nm(X, 0.0)
    with pytest.raises(ConfigError):
        neural_score_model(noise, vp, TrainConfig())


def test_untrained_net_runs_end_to_end(vp):
    model = NeuralScore(ScoreNet.init(2, 8, 0), vp)
    X = generate_samples(model, vp, 20, t_min=1e-4, seed=0, steps=50)
    assert X.shape == (20, 2) and np.all(np.isfinite(X))
    tr = integrate_reverse_ode(model, vp, X[:3], TimeGrid.geometric(1.0, 0.0, 50))
    assert np.all(np.isfinite(tr.states))
    noisy = NeuralScore(ScoreNet.init(2, 8, 0, mode="noise"), vp)
    with pytest.raises(SingularTimeError):
        integrate_reverse_ode(noisy, vp, X[:3], TimeGrid.geometric(1.0, 0.0, 50))


def test_checkpoint_round_trip(tmp_path):
    net = ScoreNet.init(2, 8, 7, mode="noise")
    save_checkpoint(net, tmp_path / "a.npz")
    save_checkpoint(net, tmp_path / "b.npz")
    back = load_checkpoint(tmp_path / "a.npz")
    assert np.array_equal(back.theta, net.theta)
    assert np.array_equal(back.embedding.frequencies, net.embedding.frequencies)
    assert (back.mode, back.seed, back.width) == ("noise", 7, 8)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_loss_history_csv(tmp_path):
    write_loss_history(np.array([2.0, 1.5]), tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "epoch,mean_loss\n1,2\n2,1.5\n"


def test_loss_enum_codes():
    assert [Loss(v).code for v in ("score_matching", "denoising", "tikhonov")] == [0, 1, 2]
