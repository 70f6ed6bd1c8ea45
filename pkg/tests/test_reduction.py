import numpy as np
import pytest

from conftest import random_network, two_mass_spring
from hamroc.autoencoder import (
    decode,
    encode,
    identity_autoencoder,
    init_autoencoder,
    linear_autoencoder,
)
from hamroc.errors import DimensionMismatch
from hamroc.network import (
    GravityField,
    damping_matrix,
    hamiltonian,
    mass_diagonal,
    mass_matrix,
    potential_energy,
    potential_gradient,
)
from hamroc.numerics import rk4_step
from hamroc.reduction import (
    LatentState,
    ReducedSystem,
    compress_state,
    latent_dissipation,
    latent_energy,
    latent_energy_gradient_xi,
    latent_input_field,
    latent_mass_matrix,
    latent_potential,
    load_latent_trajectory,
    pointwise_compress,
    reconstruct_trajectory,
    reduced_rhs,
    save_latent_trajectory,
    simulate_reduced,
)
from hamroc.simulate import random_initial_configuration, simulate_full

GRAV = GravityField(g=9.81, theta=-np.pi / 3)
NO_GRAVITY = GravityField(g=0.0)


def random_reduced_system(seed: int, m: int = 3, gravity=GRAV):
    """Random net + untrained autoencoder, redrawing weight sets whose
    decoder is born near rank deficiency."""
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_cells=2)
    for attempt in range(20):
        ae = init_autoencoder(
            net.n_dof, m, seed=seed + 1000 * attempt, output_bias=net.rest_configuration()
        )
        rs = ReducedSystem(net=net, gravity=gravity, ae=ae)
        if np.linalg.cond(latent_mass_matrix(rs, np.zeros(m))) < 1e3:
            return rs
    raise AssertionError("no healthy random decoder found")


def sample_conditioned_state(rs, rng, scale=0.05, max_cond=1e4, tries=100):
    """Random (xi, pi) at which the latent mass matrix is well conditioned.

    Untrained decoders saturate their ELUs away from the origin, losing
    Jacobian rank; derivative oracles only make sense on healthy states.
    """
    m = rs.latent_dim
    for _ in range(tries):
        xi = rng.normal(size=m) * scale
        m_lat = latent_mass_matrix(rs, xi)
        if np.linalg.cond(m_lat) < max_cond:
            return xi, rng.normal(size=m) * scale
    raise AssertionError("could not find a well-conditioned latent state")


class TestLatentPotential:
    def test_identity_decoder_equals_full(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        q = desk_net.rest_configuration()
        assert latent_potential(rs, q) == pytest.approx(potential_energy(desk_net, GRAV, q))

    def test_definitional_composition(self):
        rs = random_reduced_system(0)
        xi = np.array([0.1, -0.2, 0.3])
        assert latent_potential(rs, xi) == pytest.approx(
            potential_energy(rs.net, rs.gravity, decode(rs.ae, xi))
        )


class TestLatentMassMatrix:
    def test_identity_decoder(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        np.testing.assert_allclose(
            latent_mass_matrix(rs, desk_net.rest_configuration()),
            mass_matrix(desk_net),
            atol=1e-12,
        )

    def test_linear_decoder_constant(self):
        rng = np.random.default_rng(1)
        net = two_mass_spring(k=3.0, c=0.5)
        w = rng.normal(size=(4, 2))
        ae = linear_autoencoder(w)
        rs = ReducedSystem(net=net, gravity=NO_GRAVITY, ae=ae)
        expected = w.T @ mass_matrix(net) @ w
        for _ in range(3):
            xi = rng.normal(size=2)
            np.testing.assert_allclose(latent_mass_matrix(rs, xi), expected, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_fd_jacobian_oracle(self, seed):
        rs = random_reduced_system(seed)
        rng = np.random.default_rng(seed)
        xi = rng.normal(size=3) * 0.3
        h = 1e-6
        jac_fd = np.zeros((rs.net.n_dof, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            jac_fd[:, k] = (decode(rs.ae, xi + e) - decode(rs.ae, xi - e)) / (2 * h)
        expected = jac_fd.T @ mass_matrix(rs.net) @ jac_fd
        np.testing.assert_allclose(latent_mass_matrix(rs, xi), expected, atol=1e-4)

    def test_symmetric(self):
        rs = random_reduced_system(7)
        m_lat = latent_mass_matrix(rs, np.array([0.5, -0.1, 0.2]))
        np.testing.assert_array_equal(m_lat, m_lat.T)


class TestLatentEnergy:
    def test_zero_momenta_is_potential(self):
        rs = random_reduced_system(2)
        xi = np.array([0.2, 0.1, -0.3])
        assert latent_energy(rs, xi, np.zeros(3)) == pytest.approx(latent_potential(rs, xi))

    def test_identity_decoder_matches_hamiltonian(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        rng = np.random.default_rng(3)
        q = desk_net.rest_configuration() + rng.uniform(-0.05, 0.05, desk_net.n_dof)
        p = rng.normal(size=desk_net.n_dof) * 0.1
        assert latent_energy(rs, q, p) == pytest.approx(
            hamiltonian(desk_net, GRAV, q, p), rel=1e-10
        )

    def test_energy_matching_through_pullback_momenta(self, desk_net):
        # for the identity map, compressing (q, qdot) reproduces H exactly
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        rng = np.random.default_rng(4)
        q = desk_net.rest_configuration() + rng.uniform(-0.03, 0.03, desk_net.n_dof)
        qdot = rng.normal(size=desk_net.n_dof) * 0.2
        xi, pi = compress_state(rs, q, qdot)
        p = mass_diagonal(desk_net) * qdot
        assert latent_energy(rs, xi, pi) == pytest.approx(
            hamiltonian(desk_net, GRAV, q, p), rel=1e-10
        )


class TestLatentEnergyGradient:
    def test_linear_decoder_potential_only(self):
        rng = np.random.default_rng(5)
        net = two_mass_spring(k=4.0, l0=0.7)
        w = rng.normal(size=(4, 2))
        ae = linear_autoencoder(w)
        rs = ReducedSystem(net=net, gravity=NO_GRAVITY, ae=ae)
        xi = rng.normal(size=2) * 0.2
        pi = rng.normal(size=2)
        grad = latent_energy_gradient_xi(rs, xi, pi)
        expected = w.T @ potential_gradient(net, NO_GRAVITY, decode(ae, xi))
        np.testing.assert_allclose(grad, expected, atol=1e-10)

    def test_zero_momenta_gives_potential_gradient(self):
        rs = random_reduced_system(6)
        rng = np.random.default_rng(6)
        xi = rng.normal(size=3) * 0.2
        grad = latent_energy_gradient_xi(rs, xi, np.zeros(3))
        from hamroc.autoencoder import decoder_jacobian

        jac = decoder_jacobian(rs.ae, xi)
        expected = jac.T @ potential_gradient(rs.net, rs.gravity, decode(rs.ae, xi))
        np.testing.assert_allclose(grad, expected, atol=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_difference_oracle(self, seed):
        # sample states where M_lat is well conditioned: the FD oracle is
        # meaningless where the decoder Jacobian loses rank
        rs = random_reduced_system(seed)
        rng = np.random.default_rng(40 + seed)
        xi, pi = sample_conditioned_state(rs, rng)
        grad = latent_energy_gradient_xi(rs, xi, pi)
        h = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (latent_energy(rs, xi + e, pi) - latent_energy(rs, xi - e, pi)) / (2 * h)
            assert abs(grad[k] - fd) <= 1e-4 * (1.0 + abs(fd))


class TestLatentDissipationAndInput:
    def test_identity_decoder(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        node = int(desk_net.free_nodes[2])
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae, actuated=node)
        q = desk_net.rest_configuration()
        np.testing.assert_allclose(
            latent_dissipation(rs, q), damping_matrix(desk_net, q), atol=1e-12
        )
        from hamroc.network import actuation_matrix

        np.testing.assert_allclose(
            latent_input_field(rs, q), actuation_matrix(desk_net, node), atol=1e-14
        )

    def test_zero_damping(self):
        net = two_mass_spring(k=2.0, c=0.0)
        ae = identity_autoencoder(4)
        rs = ReducedSystem(net=net, gravity=NO_GRAVITY, ae=ae)
        np.testing.assert_array_equal(
            latent_dissipation(rs, net.rest_configuration()), np.zeros((4, 4))
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_dissipation_psd(self, seed):
        rs = random_reduced_system(seed)
        rng = np.random.default_rng(60 + seed)
        xi = rng.normal(size=3) * 0.3
        delta = latent_dissipation(rs, xi)
        np.testing.assert_allclose(delta, delta.T, atol=1e-10)
        for _ in range(100):
            x = rng.normal(size=3)
            assert x @ delta @ x >= -1e-10

    def test_input_field_is_jacobian_rows(self):
        rng = np.random.default_rng(8)
        net = random_network(rng, n_cells=2)
        node = int(net.free_nodes[1])
        ae = init_autoencoder(net.n_dof, 2, seed=1, output_bias=net.rest_configuration())
        rs = ReducedSystem(net=net, gravity=GRAV, ae=ae, actuated=node)
        xi = rng.normal(size=2) * 0.1
        from hamroc.autoencoder import decoder_jacobian

        jac = decoder_jacobian(ae, xi)
        base = net.dof_of(node)
        np.testing.assert_allclose(
            latent_input_field(rs, xi), jac[base : base + 2, :].T, atol=1e-14
        )


class TestReducedRhs:
    def test_identity_decoder_matches_full(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        rng = np.random.default_rng(9)
        q = desk_net.rest_configuration() + rng.uniform(-0.03, 0.03, desk_net.n_dof)
        p = rng.normal(size=desk_net.n_dof) * 0.1
        from hamroc.simulate import FullState, full_rhs

        qdot, pdot = full_rhs(desk_net, GRAV, FullState(q=q, p=p, t=0.0))
        xidot, pidot = reduced_rhs(rs, LatentState(xi=q, pi=p, t=0.0))
        np.testing.assert_allclose(xidot, qdot, atol=1e-9)
        np.testing.assert_allclose(pidot, pdot, atol=1e-9)

    def test_latent_equilibrium(self):
        # zero momenta and zero latent potential gradient freeze the flow
        net = two_mass_spring(k=2.0, c=0.3)
        ae = identity_autoencoder(4)
        rs = ReducedSystem(net=net, gravity=NO_GRAVITY, ae=ae)
        xidot, pidot = reduced_rhs(
            rs, LatentState(xi=net.rest_configuration(), pi=np.zeros(4), t=0.0)
        )
        np.testing.assert_allclose(xidot, 0.0, atol=1e-14)
        np.testing.assert_allclose(pidot, 0.0, atol=1e-14)

    def test_unforced_dissipation(self):
        rs = random_reduced_system(11, m=2)
        xi0 = encode(rs.ae, rs.net.rest_configuration() * 1.02)
        latent = simulate_reduced(rs, xi0, np.zeros(2), duration=1.0, dt=1e-3, sample_dt=0.02)
        tol = 1e-6 * (1.0 + abs(latent.etas[0]))
        assert np.all(np.diff(latent.etas) <= tol)


class TestSimulateReduced:
    def test_identity_decoder_equivalence(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        q0 = random_initial_configuration(desk_net, seed=5, amplitude=0.08)
        p0 = np.zeros(desk_net.n_dof)
        full = simulate_full(desk_net, GRAV, q0, p0, duration=1.0, dt=1e-3, sample_dt=0.02)
        latent = simulate_reduced(rs, q0, p0, duration=1.0, dt=1e-3, sample_dt=0.02)
        rec, etas = reconstruct_trajectory(rs, latent)
        assert np.max(np.abs(rec.qs - full.qs)) <= 1e-6
        assert np.max(np.abs(rec.ps - full.ps)) <= 1e-6

    def test_galerkin_oracle(self):
        # orthonormal linear decoder + unit masses: independently coded
        # projected dynamics must match the assembled reduction
        rng = np.random.default_rng(13)
        net = random_network(rng, n_cells=2)
        net = type(net)(
            masses=np.ones(net.n_nodes),
            rest_positions=net.rest_positions,
            pinned=net.pinned,
            edges=net.edges,
            stiffness=net.stiffness,
            damping=net.damping,
            rest_lengths=net.rest_lengths,
        )
        n, m = net.n_dof, 2
        basis, _ = np.linalg.qr(rng.normal(size=(n, m)))
        ae = linear_autoencoder(basis)
        rs = ReducedSystem(net=net, gravity=GRAV, ae=ae)

        # independent oracle: xi'' = -W^T grad V(W xi) - W^T D(W xi) W xi'
        from hamroc.network import damping_force

        def oracle_rhs(t, y):
            xi, v = y[:m], y[m:]
            q = basis @ xi
            acc = -basis.T @ potential_gradient(net, GRAV, q) - basis.T @ damping_force(
                net, q, basis @ v
            )
            return np.concatenate([v, acc])

        xi0 = basis.T @ random_initial_configuration(net, seed=3, amplitude=0.05)
        y = np.concatenate([xi0, np.zeros(m)])
        dt = 1e-3
        for i in range(1000):
            y = rk4_step(oracle_rhs, y, i * dt, dt)

        latent = simulate_reduced(rs, xi0, np.zeros(m), duration=1.0, dt=dt, sample_dt=0.02)
        # orthonormal basis and unit masses make M_lat = I, so pi = xi'
        np.testing.assert_allclose(latent.xis[-1], y[:m], atol=1e-6)
        np.testing.assert_allclose(latent.pis[-1], y[m:], atol=1e-6)

    def test_rest_start_means_zero_latent_momenta(self):
        rs = random_reduced_system(14, m=2)
        q0 = rs.net.rest_configuration()
        xi0, pi0 = compress_state(rs, q0, np.zeros(rs.net.n_dof))
        np.testing.assert_allclose(pi0, 0.0, atol=1e-14)
        np.testing.assert_allclose(xi0, encode(rs.ae, q0), atol=1e-14)


class TestPointwiseCompress:
    def test_identity_autoencoder_passthrough(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        rng = np.random.default_rng(15)
        q = desk_net.rest_configuration() + rng.uniform(-0.02, 0.02, desk_net.n_dof)
        qdot = rng.normal(size=desk_net.n_dof) * 0.1
        res = pointwise_compress(rs, q, qdot)
        np.testing.assert_allclose(res.q_rec, q, atol=1e-12)
        np.testing.assert_allclose(res.qdot_rec, qdot, atol=1e-12)
        p = mass_diagonal(desk_net) * qdot
        assert res.energy == pytest.approx(hamiltonian(desk_net, GRAV, q, p), rel=1e-10)

    def test_zero_velocity(self):
        rs = random_reduced_system(16, m=2)
        q = rs.net.rest_configuration()
        res = pointwise_compress(rs, q, np.zeros(rs.net.n_dof))
        np.testing.assert_allclose(res.qdot_rec, 0.0, atol=1e-12)
        assert res.energy == pytest.approx(latent_potential(rs, res.xi), rel=1e-12)


class TestReconstruction:
    def test_identity_roundtrip(self, desk_net):
        ae = identity_autoencoder(desk_net.n_dof)
        rs = ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
        q0 = random_initial_configuration(desk_net, seed=21, amplitude=0.05)
        latent = simulate_reduced(rs, q0, np.zeros(desk_net.n_dof), duration=0.2, dt=1e-3, sample_dt=0.02)
        rec, etas = reconstruct_trajectory(rs, latent)
        np.testing.assert_allclose(rec.qs, latent.xis, atol=1e-12)
        np.testing.assert_allclose(rec.ps, latent.pis, atol=1e-9)

    def test_first_sample_is_decoded_initial(self):
        rs = random_reduced_system(17, m=2)
        q0 = rs.net.rest_configuration()
        xi0 = encode(rs.ae, q0)
        latent = simulate_reduced(rs, xi0, np.zeros(2), duration=0.1, dt=1e-3, sample_dt=0.05)
        rec, _ = reconstruct_trajectory(rs, latent)
        np.testing.assert_allclose(rec.qs[0], decode(rs.ae, xi0), atol=1e-12)

    def test_energy_column_matches_recomputation(self):
        rs = random_reduced_system(18, m=2)
        xi0 = encode(rs.ae, rs.net.rest_configuration())
        latent = simulate_reduced(rs, xi0, np.zeros(2), duration=0.1, dt=1e-3, sample_dt=0.02)
        for k in range(len(latent)):
            assert latent.etas[k] == pytest.approx(
                latent_energy(rs, latent.xis[k], latent.pis[k]), rel=1e-12
            )


class TestLatentTrajectoryIO:
    def test_roundtrip(self, tmp_path):
        rs = random_reduced_system(19, m=2)
        xi0 = encode(rs.ae, rs.net.rest_configuration())
        latent = simulate_reduced(rs, xi0, np.zeros(2), duration=0.1, dt=1e-3, sample_dt=0.02)
        path = tmp_path / "latent.csv"
        save_latent_trajectory(path, latent)
        loaded = load_latent_trajectory(path, rs.gravity)
        np.testing.assert_array_equal(loaded.xis, latent.xis)
        np.testing.assert_array_equal(loaded.pis, latent.pis)
        np.testing.assert_array_equal(loaded.etas, latent.etas)

    def test_header(self, tmp_path):
        rs = random_reduced_system(20, m=2)
        xi0 = encode(rs.ae, rs.net.rest_configuration())
        latent = simulate_reduced(rs, xi0, np.zeros(2), duration=0.1, dt=1e-3, sample_dt=0.05)
        path = tmp_path / "latent.csv"
        save_latent_trajectory(path, latent)
        header = path.read_text().split("\n", 1)[0]
        assert header == "t,xi_0,xi_1,pi_0,pi_1,eta"


class TestValidation:
    def test_decoder_dim_must_match_network(self, desk_net):
        ae = init_autoencoder(desk_net.n_dof + 2, 2, seed=0)
        with pytest.raises(DimensionMismatch):
            ReducedSystem(net=desk_net, gravity=GRAV, ae=ae)
