import numpy as np
import pytest

from conftest import make_net, random_network, two_mass_spring
from hamroc import serialize
from hamroc.errors import (
    DegenerateSpring,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidConfig,
    PinnedNode,
)
from hamroc.network import (
    GeneratorConfig,
    GravityField,
    actuation_matrix,
    damping_matrix,
    generate_network,
    hamiltonian,
    load_network,
    mass_matrix,
    paper_scale_config,
    potential_energy,
    potential_gradient,
    save_network,
    to_json_dict,
)

NO_GRAVITY = GravityField(g=0.0)


class TestGenerator:
    def test_single_square_cell(self):
        cfg = GeneratorConfig(
            seed=1, n_base_cells=1, lateral_attach_probability=0.0, cell_types=("square",)
        )
        net = generate_network(cfg)
        assert net.n_nodes == 4
        assert net.n_edges == 5  # 4 perimeter sides + 1 diagonal brace

    def test_single_diamond_cell(self):
        cfg = GeneratorConfig(
            seed=1, n_base_cells=1, lateral_attach_probability=0.0, cell_types=("diamond",)
        )
        net = generate_network(cfg)
        assert net.n_nodes == 5  # top pair + midpoint + bottom pair
        assert net.n_edges == 6

    def test_determinism_byte_identical(self):
        cfg = GeneratorConfig(seed=9, n_base_cells=5, lateral_attach_probability=0.5)
        doc_a = serialize.dumps_json(to_json_dict(generate_network(cfg)))
        doc_b = serialize.dumps_json(to_json_dict(generate_network(cfg)))
        assert doc_a == doc_b

    def test_paper_scale_counts(self):
        net = generate_network(paper_scale_config(seed=0))
        assert 200 <= net.n_nodes <= 205
        assert 630 <= net.n_edges <= 642

    def test_rest_lengths_match_geometry(self):
        net = generate_network(GeneratorConfig(seed=2, n_base_cells=3))
        d = net.rest_positions[net.edges[:, 0]] - net.rest_positions[net.edges[:, 1]]
        np.testing.assert_allclose(net.rest_lengths, np.linalg.norm(d, axis=1), rtol=1e-12)

    def test_top_pair_pinned(self):
        net = generate_network(GeneratorConfig(seed=2, n_base_cells=2))
        assert net.pinned[0] and net.pinned[1]
        assert net.n_dof == 2 * (net.n_nodes - 2)

    def test_invalid_ranges_rejected(self):
        with pytest.raises(InvalidConfig):
            GeneratorConfig(mass_range=(0.2, 0.1))
        with pytest.raises(InvalidConfig):
            GeneratorConfig(stiffness_range=(0.0, 10.0))
        with pytest.raises(InvalidConfig):
            GeneratorConfig(n_base_cells=0)

    def test_parameters_within_ranges(self):
        cfg = GeneratorConfig(seed=5, n_base_cells=4, lateral_attach_probability=0.5)
        net = generate_network(cfg)
        assert np.all((net.masses >= cfg.mass_range[0]) & (net.masses <= cfg.mass_range[1]))
        assert np.all(
            (net.stiffness >= cfg.stiffness_range[0]) & (net.stiffness <= cfg.stiffness_range[1])
        )
        assert np.all(
            (net.damping >= cfg.damping_range[0]) & (net.damping <= cfg.damping_range[1])
        )


class TestPotentialEnergy:
    def test_rest_spring_no_gravity(self):
        net = two_mass_spring(k=2.0, l0=1.0)
        assert potential_energy(net, NO_GRAVITY, net.rest_configuration()) == 0.0

    def test_stretched_spring(self):
        # k=2 spring at length 1 with rest length 0.5: 0.5 * 2 * 0.5^2
        net = two_mass_spring(k=2.0, l0=0.5)
        v = potential_energy(net, NO_GRAVITY, net.rest_configuration())
        assert v == pytest.approx(0.25, abs=1e-14)

    def test_gravity_term_by_hand(self):
        # lone unit mass at (0, 1): V = m g (x sin0 + y cos0) = 9.81
        net = make_net([(0.0, 1.0), (0.0, 0.0)], [(0, 1, 1.0, 0.0)], pinned=[False, True])
        grav = GravityField(g=9.81, theta=0.0)
        q = np.array([0.0, 1.0])
        assert potential_energy(net, grav, q) == pytest.approx(9.81, abs=1e-12)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(3)
        net = two_mass_spring(k=5.0, l0=0.8)
        q = rng.normal(size=4)
        swapped = make_net(
            net.rest_positions[[1, 0]],
            [(0, 1, 5.0, 0.0)],
            rest_lengths=[0.8],
        )
        q_swapped = np.concatenate([q[2:], q[:2]])
        grav = GravityField(g=4.0, theta=1.1)
        assert potential_energy(net, grav, q) == pytest.approx(
            potential_energy(swapped, grav, q_swapped), rel=1e-14
        )

    def test_dimension_mismatch(self):
        net = two_mass_spring()
        with pytest.raises(DimensionMismatch):
            potential_energy(net, NO_GRAVITY, np.zeros(3))


class TestPotentialGradient:
    def test_zero_at_rest_no_gravity(self):
        net = two_mass_spring(k=3.0)
        g = potential_gradient(net, NO_GRAVITY, net.rest_configuration())
        np.testing.assert_allclose(g, 0.0, atol=1e-14)

    def test_hookes_law_by_hand(self):
        # length 1 vs rest 0.5 at k=2: tension k(l - l0) = 1 N along x
        net = two_mass_spring(k=2.0, l0=0.5)
        g = potential_gradient(net, NO_GRAVITY, net.rest_configuration())
        np.testing.assert_allclose(g, [-1.0, 0.0, 1.0, 0.0], atol=1e-14)

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_difference_oracle(self, seed):
        rng = np.random.default_rng(seed)
        net = random_network(rng)
        grav = GravityField(g=rng.uniform(0, 15), theta=rng.uniform(0, 2 * np.pi))
        q = net.rest_configuration() + rng.uniform(-0.05, 0.05, size=net.n_dof)
        grad = potential_gradient(net, grav, q)
        h = 1e-6
        for k in rng.choice(net.n_dof, size=min(6, net.n_dof), replace=False):
            e = np.zeros(net.n_dof)
            e[k] = h
            fd = (potential_energy(net, grav, q + e) - potential_energy(net, grav, q - e)) / (2 * h)
            assert abs(grad[k] - fd) <= 1e-6 * (1.0 + abs(fd))

    def test_degenerate_spring_raises(self):
        net = two_mass_spring()
        q = np.array([0.0, 0.0, 0.0, 0.0])  # coincident endpoints
        with pytest.raises(DegenerateSpring):
            potential_gradient(net, NO_GRAVITY, q)


class TestMassAndDamping:
    def test_mass_matrix_two_nodes(self):
        net = make_net([(0, 0), (1, 0)], [(0, 1, 1.0, 0.0)], masses=[1.0, 3.0])
        np.testing.assert_array_equal(mass_matrix(net), np.diag([1.0, 1.0, 3.0, 3.0]))

    def test_mass_matrix_identity(self):
        net = two_mass_spring()
        np.testing.assert_array_equal(mass_matrix(net), np.eye(4))

    def test_paper_scale_mass_matrix_shape(self):
        net = generate_network(paper_scale_config(seed=0))
        assert mass_matrix(net).shape == (net.n_dof, net.n_dof)

    def test_damping_outer_product_by_hand(self):
        net = two_mass_spring(k=1.0, c=1.0)
        d = damping_matrix(net, net.rest_configuration())
        grad_l = np.array([1.0, 0.0, -1.0, 0.0])
        np.testing.assert_allclose(d, np.outer(grad_l, grad_l), atol=1e-14)

    def test_zero_damping(self):
        net = two_mass_spring(c=0.0)
        assert np.all(damping_matrix(net, net.rest_configuration()) == 0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_symmetric_psd(self, seed):
        rng = np.random.default_rng(seed)
        net = random_network(rng)
        q = net.rest_configuration() + rng.uniform(-0.05, 0.05, size=net.n_dof)
        d = damping_matrix(net, q)
        np.testing.assert_allclose(d, d.T, atol=1e-12)
        for _ in range(100):
            x = rng.normal(size=net.n_dof)
            assert x @ d @ x >= -1e-12


class TestActuationMatrix:
    def test_selection_block(self):
        net = make_net([(0, 0), (1, 0), (2, 0)], [(0, 1, 1, 0), (1, 2, 1, 0)])
        g = actuation_matrix(net, 1)
        expected = np.zeros((6, 2))
        expected[2, 0] = expected[3, 1] = 1.0
        np.testing.assert_array_equal(g, expected)

    def test_orthonormal_columns(self):
        net = make_net([(0, 0), (1, 0), (2, 0)], [(0, 1, 1, 0), (1, 2, 1, 0)])
        for a in range(3):
            g = actuation_matrix(net, a)
            np.testing.assert_array_equal(g.T @ g, np.eye(2))

    def test_out_of_range(self):
        net = two_mass_spring()
        with pytest.raises(IndexOutOfRange):
            actuation_matrix(net, 2)

    def test_pinned_node_rejected(self):
        net = make_net([(0, 0), (1, 0)], [(0, 1, 1, 0)], pinned=[True, False])
        with pytest.raises(PinnedNode):
            actuation_matrix(net, 0)


class TestHamiltonian:
    def test_rest_momenta_equals_potential(self):
        net = two_mass_spring(k=2.0, l0=0.5)
        grav = GravityField(g=3.0, theta=0.7)
        q = net.rest_configuration()
        assert hamiltonian(net, grav, q, np.zeros(4)) == pytest.approx(
            potential_energy(net, grav, q)
        )

    def test_kinetic_part(self):
        net = two_mass_spring()
        p = np.array([1.0, 0.0, 0.0, 0.0])
        h = hamiltonian(net, NO_GRAVITY, net.rest_configuration(), p)
        assert h == pytest.approx(0.5, abs=1e-14)

    def test_kinetic_nonnegative(self):
        rng = np.random.default_rng(1)
        net = two_mass_spring(k=2.0, l0=1.0)
        q = net.rest_configuration()
        for _ in range(20):
            p = rng.normal(size=4)
            assert hamiltonian(net, NO_GRAVITY, q, p) >= potential_energy(net, NO_GRAVITY, q)


class TestNetworkIO:
    def test_roundtrip(self, tmp_path, desk_net):
        path = tmp_path / "net.json"
        save_network(path, desk_net)
        loaded = load_network(path)
        np.testing.assert_array_equal(loaded.masses, desk_net.masses)
        np.testing.assert_array_equal(loaded.rest_positions, desk_net.rest_positions)
        np.testing.assert_array_equal(loaded.edges, desk_net.edges)
        np.testing.assert_array_equal(loaded.pinned, desk_net.pinned)
        np.testing.assert_array_equal(loaded.stiffness, desk_net.stiffness)

    def test_field_order_fixed(self, tmp_path, desk_net):
        path = tmp_path / "net.json"
        save_network(path, desk_net)
        text = path.read_text()
        assert text.index('"nodes"') < text.index('"edges"') < text.index('"meta"')
        node_block = text[text.index('"nodes"') : text.index('"edges"')]
        first = node_block[node_block.index("{", 10) :]
        assert first.index('"mass"') < first.index('"x0"') < first.index('"y0"') < first.index('"pinned"')
