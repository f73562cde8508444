import numpy as np
import pytest
from sklearn.base import clone

from bipde import datagen as dg
from bipde import poisson as ps
from bipde.estimators import (BurgersFDEstimator, BurgersRBFEstimator, Poisson1DEstimator,
                              PoissonZernikeEstimator, TrainingError)


@pytest.fixture(scope="module")
def ensemble_1d():
    return dg.gen_poisson_ensemble(1, 240, rng_seed=3, N=41)


def test_params_round_trip_and_clone():
    est = Poisson1DEstimator(epochs=7, lr=0.01)
    assert est.get_params()["epochs"] == 7
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_poisson_1d_encoder_learns(ensemble_1d):
    X, y = ensemble_1d.fields, ensemble_1d.coeffs
    est = Poisson1DEstimator(epochs=40, batch_size=40, lr=3e-3, random_state=0).fit(X[:200])
    assert est.history_[-1] < est.history_[0]
    assert est.score(X[200:], y[200:]) > 0.8
    assert est.predict(X[200:]).shape == (40, 2)


def test_poisson_1d_direct_per_sample(ensemble_1d):
    X, y = ensemble_1d.fields[:4], ensemble_1d.coeffs[:4]
    est = Poisson1DEstimator(mode="direct", epochs=300, lr=0.05).fit(X)
    np.testing.assert_allclose(est.predict(X), y, atol=1e-3)
    with pytest.raises(ValueError):
        est.predict(ensemble_1d.fields[:3])


def test_input_validation(ensemble_1d):
    est = Poisson1DEstimator(epochs=1)
    with pytest.raises(ValueError):
        est.fit(np.zeros((0, 41)))
    with pytest.raises(ValueError):
        est.fit(np.zeros((3, 4, 5)))
    est.fit(ensemble_1d.fields[:5])
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 40)))
    with pytest.raises(ValueError):
        Poisson1DEstimator(mode="magic", epochs=1).fit(ensemble_1d.fields[:5])


def test_epochs_zero_echoes_initialisation(ensemble_1d):
    est = Poisson1DEstimator(mode="direct", epochs=0, bounds=(0.0, 1.0)).fit(
        ensemble_1d.fields[:3])
    np.testing.assert_allclose(est.predict(ensemble_1d.fields[:3]), 0.5)
    assert est.history_ == [] and np.isfinite(est.final_loss_)


def test_zernike_case_one_direct():
    grid = ps.Grid2D.square(n=12)
    X, Y = grid.mesh()
    D = np.sqrt(2) + 0.1 * (Y - X)
    f = lambda X, Y: np.sin(np.pi * X) * np.cos(np.pi * Y) + 1.0
    u = ps.solve_2d(ps.PoissonProblem(grid, D, f(X, Y)), full=True).data[None]
    est = PoissonZernikeEstimator(bounds=[(0.5, 2.5), (-0.5, 0.5), (-0.5, 0.5)], source=f,
                                  epochs=300, lr=0.02).fit(u)
    np.testing.assert_allclose(est.predict(u)[0], [np.sqrt(2), 0.1, -0.1], atol=2e-3)
    rel = np.abs(est.diffusion_field(u)[0] - D) / D
    assert rel.max() < 0.01


def test_zernike_rejects_square_outside_disk():
    with pytest.raises(ValueError):
        PoissonZernikeEstimator(half_width=0.9, epochs=0).fit(np.zeros((1, 5, 5)))


def _pairs(nu, gamma=1.0, N=64, t_final=0.02, p=1):
    traj = dg.gen_burgers(nu, gamma, N_x=N, dt=1e-3, t_final=t_final)
    pairs = dg.make_shift_pairs(traj, p)
    return np.stack([pairs.inputs, pairs.targets], axis=1)


def test_burgers_fd_recovers_nu_and_gamma():
    X = _pairs(0.02, 1.2)
    est = BurgersFDEstimator(nu_range=(0.0, 0.05), gamma_range=(0.5, 2.0), epochs=50,
                             lr=0.05, newton_steps=8).fit(X)
    nu, gamma = est.predict(X)[0]
    assert nu == pytest.approx(0.02, rel=1e-6) and gamma == pytest.approx(1.2, rel=1e-6)


def test_burgers_fd_shift_pair_layout():
    with pytest.raises(ValueError):
        BurgersFDEstimator(epochs=0).fit(np.zeros((4, 3, 16)))


def test_burgers_fd_blow_up_is_training_error():
    X = _pairs(0.02, N=64)
    # ten huge explicit steps drive the state past the blow-up guard
    est = BurgersFDEstimator(nu_range=(0.0, 0.05), dt=0.5, p=10, epochs=1, newton_steps=0)
    with pytest.raises(TrainingError):
        est.fit(X)


def test_burgers_rbf_direct_recovers_nu():
    nu = 0.1 / np.pi
    pts = np.linspace(-1, 1, 42)[1:-1]
    traj = dg.gen_burgers(nu, N_x=161, dt=1e-3, t_final=0.03, reference="exact")
    _, vals = dg.scatter_resample(traj.U, traj.x, 0, points=pts)
    pairs = dg.make_shift_pairs(vals, 5)
    X = np.stack([pairs.inputs, pairs.targets], axis=1)
    est = BurgersRBFEstimator(N_s=12, points=pts, nu_range=(0.0, 0.1), p=5, epochs=60,
                              lr=0.02, eps=1e-16).fit(X)
    assert np.median(est.predict(X)[:, 0]) == pytest.approx(nu, rel=0.05)
    seeds, shapes = est.discretization()
    assert seeds.shape == (1, 12) and np.all(shapes > 0)


def test_fitted_state_restores_predictions(ensemble_1d):
    X = ensemble_1d.fields[:60]
    est = Poisson1DEstimator(epochs=3, batch_size=20).fit(X)
    twin = clone(est).restore(est.model_, est.fitted_state())
    np.testing.assert_array_equal(twin.predict(X), est.predict(X))
