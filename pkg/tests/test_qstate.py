import numpy as np
import pytest

from helpers import complex_gaussian
from qmo.errors import CorruptedStateError, DimensionError, PreconditionError, UsageError, ZeroMatrixError
from qmo.manifolds import (
    ManifoldDescriptor,
    ManifoldKind,
    ManifoldPoint,
    Retraction,
    TangentVector,
    metric,
    project_tangent,
    random_point,
    retract,
)
from qmo.qstate import (
    EncodedState,
    IndexedOperator,
    RegisterShape,
    apply_operator,
    basis_operator,
    ceil_log2,
    decode,
    encode,
    expectation,
    index_gram,
    overlap_inner_product,
    prepare_uniform,
    quantum_project,
    quantum_retract,
    quantum_retract_normalize,
    quantum_retract_qr,
    state_records,
    superpose,
    transition,
)

SIZES = [(2, 2), (4, 3), (8, 5), (16, 4), (3, 1), (1, 6)]


@pytest.mark.parametrize("n, d", SIZES)
def test_register_uses_ceil_log2_qubits(n, d, rng):
    state = encode(complex_gaussian(rng, (n, d)))
    assert state.shape.index_qubits == ceil_log2(d)
    assert state.shape.column_qubits == ceil_log2(n)
    assert state.amplitudes.size == 2 ** (ceil_log2(d) + ceil_log2(n))


def test_ceil_log2():
    assert [ceil_log2(m) for m in (1, 2, 3, 4, 5, 8, 9, 16)] == [0, 1, 2, 2, 3, 3, 4, 4]


def test_encode_basis_vector():
    state = encode(np.array([[1.0], [0.0]]))
    assert np.allclose(state.amplitudes, [1.0, 0.0])
    assert state.scale == 1.0


def test_encode_identity_is_bell_state():
    state = encode(np.eye(2))
    assert np.allclose(state.amplitudes, np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0))
    assert state.scale == pytest.approx(np.sqrt(2.0))
    assert np.allclose(decode(state), np.eye(2))


@pytest.mark.parametrize("n, d", SIZES)
def test_encode_decode_round_trip(n, d, rng):
    X = complex_gaussian(rng, (n, d))
    state = encode(X)
    assert abs(np.linalg.norm(state.amplitudes) - 1.0) <= 1e-12
    assert np.max(np.abs(decode(state) - X)) <= 1e-12


def test_encode_rejects_zero_matrix():
    with pytest.raises(ZeroMatrixError):
        encode(np.zeros((2, 2)))


def test_decode_rejects_nonzero_padding():
    shape = RegisterShape(3, 1)
    amplitudes = np.array([0.6, 0.0, 0.0, 0.8])
    with pytest.raises(CorruptedStateError):
        decode(EncodedState(shape, amplitudes, 1.0))


def test_encoded_state_requires_unit_amplitudes():
    with pytest.raises(ValueError):
        EncodedState(RegisterShape(2, 1), np.array([1.0, 1.0]), 1.0)
    with pytest.raises(DimensionError):
        EncodedState(RegisterShape(2, 1), np.array([1.0, 0.0, 0.0]), 1.0)


def test_overlap_equals_trace_metric(rng):
    point = random_point(ManifoldDescriptor.oblique(4, 3), seed=1)
    Z1 = project_tangent(point, complex_gaussian(rng, (4, 3)))
    Z2 = project_tangent(point, complex_gaussian(rng, (4, 3)))
    s1, s2 = encode(Z1.Z), encode(Z2.Z)
    assert overlap_inner_product(s1, s2) == pytest.approx(metric(Z1, Z2), abs=1e-10)
    assert overlap_inner_product(s1, s1) == pytest.approx(Z1.norm() ** 2, rel=1e-12)


def test_overlap_of_orthogonal_matrices_vanishes():
    assert overlap_inner_product(encode(np.eye(2)), encode(np.array([[0.0, 1.0], [1.0, 0.0]]))) == 0.0


def test_overlap_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        overlap_inner_product(encode(complex_gaussian(rng, (2, 2))), encode(complex_gaussian(rng, (4, 2))))


def test_expectation_examples():
    state = encode(np.eye(2))
    assert expectation(state, IndexedOperator(np.eye(2), np.eye(2))) == pytest.approx(1.0)
    assert expectation(state, IndexedOperator(basis_operator(2, 0, 0), np.eye(2))) == pytest.approx(0.5)


def test_expectation_contracts_columns(rng):
    X = complex_gaussian(rng, (5, 3))
    B = complex_gaussian(rng, (5, 5))
    state = encode(X)
    for k in range(3):
        for i in range(3):
            value = state.scale**2 * expectation(state, IndexedOperator(basis_operator(3, k, i), B))
            assert value == pytest.approx(X[:, k].conj() @ B @ X[:, i], abs=1e-10)


def test_expectation_is_linear(rng):
    state = encode(complex_gaussian(rng, (4, 3)))
    M1, M2 = complex_gaussian(rng, (3, 3)), complex_gaussian(rng, (3, 3))
    B = complex_gaussian(rng, (4, 4))
    combined = expectation(state, IndexedOperator(2.0 * M1 - 0.5 * M2, B))
    separate = 2.0 * expectation(state, IndexedOperator(M1, B)) - 0.5 * expectation(state, IndexedOperator(M2, B))
    assert abs(combined - separate) <= 1e-10


def test_expectation_rejects_wrong_operator_size(rng):
    state = encode(complex_gaussian(rng, (4, 3)))
    with pytest.raises(DimensionError):
        expectation(state, IndexedOperator(np.eye(4), np.eye(4)))


def test_index_gram_reads_out_column_products(rng):
    X, Z = complex_gaussian(rng, (4, 3)), complex_gaussian(rng, (4, 3))
    B = complex_gaussian(rng, (4, 4))
    assert np.allclose(index_gram(encode(X), encode(Z), B), X.conj().T @ B @ Z, atol=1e-10)


def test_apply_operator_encodes_b_x_mt(rng):
    X = complex_gaussian(rng, (4, 3))
    M, B = complex_gaussian(rng, (3, 3)), complex_gaussian(rng, (4, 4))
    result = decode(apply_operator(encode(X), IndexedOperator(M, B)))
    assert np.allclose(result, B @ X @ M.T, atol=1e-12)


def test_superpose_combines_and_cancels(rng):
    X, Z = complex_gaussian(rng, (3, 2)), complex_gaussian(rng, (3, 2))
    combined = superpose([(1.0, encode(X)), (-2.5, encode(Z))])
    assert np.allclose(decode(combined), X - 2.5 * Z, atol=1e-12)
    assert superpose([(1.0, encode(X)), (-1.0, encode(X))]).is_sentinel
    with pytest.raises(UsageError):
        superpose([])


@pytest.mark.parametrize(
    "descriptor",
    [
        ManifoldDescriptor.sphere(4),
        ManifoldDescriptor.oblique(4, 3),
        ManifoldDescriptor.oblique(8, 5),
        ManifoldDescriptor.stiefel(8, 5),
        ManifoldDescriptor.grassmannian(4, 3),
        ManifoldDescriptor.torus(5),
    ],
    ids=lambda d: f"{d.kind.value}-{d.n}x{d.d}",
)
def test_quantum_projection_matches_classical(descriptor, rng):
    for seed in range(10):
        point = random_point(descriptor, seed)
        Z = complex_gaussian(rng, point.shape)
        projected = quantum_project(encode(point.X), encode(Z), descriptor.kind)
        assert np.max(np.abs(decode(projected) - project_tangent(point, Z).Z)) <= 1e-10


def test_quantum_projection_of_the_point_is_the_sentinel():
    point = random_point(ManifoldDescriptor.oblique(4, 3), seed=2)
    state = encode(point.X)
    projected = quantum_project(state, state)
    assert projected.is_sentinel
    assert projected.scale == 0.0
    assert np.allclose(decode(projected), 0.0)


def test_quantum_projection_keeps_tangent_input(rng):
    point = random_point(ManifoldDescriptor.oblique(4, 3), seed=3)
    V = project_tangent(point, complex_gaussian(rng, (4, 3)))
    projected = quantum_project(encode(point.X), encode(V.Z))
    assert np.allclose(decode(projected), V.Z, atol=1e-10)


@pytest.mark.parametrize("descriptor", [ManifoldDescriptor.oblique(4, 3), ManifoldDescriptor.torus(6)])
def test_quantum_exponential_retraction_matches_classical(descriptor, rng):
    point = random_point(descriptor, seed=4)
    V = project_tangent(point, complex_gaussian(rng, point.shape))
    state = encode(point.X)
    moved = quantum_retract(state, V, 0.9)
    assert moved.scale == state.scale
    assert abs(np.linalg.norm(moved.amplitudes) - 1.0) <= 1e-12
    assert np.max(np.abs(decode(moved) - retract(point, V, 0.9, Retraction.EXPONENTIAL).X)) <= 1e-10
    assert quantum_retract(state, V, 0.0) is state


def test_quantum_retraction_quarter_turn():
    point = ManifoldPoint(ManifoldDescriptor.sphere(2), np.array([1.0, 0.0]))
    V = TangentVector(point, np.array([0.0, 1.0]))
    moved = quantum_retract(encode(point.X), V, np.pi / 2)
    assert np.allclose(decode(moved)[:, 0], [0.0, 1.0], atol=1e-12)


def test_quantum_retraction_rejects_foreign_anchor(rng):
    descriptor = ManifoldDescriptor.oblique(3, 2)
    here, there = random_point(descriptor, seed=1), random_point(descriptor, seed=2)
    V = project_tangent(there, complex_gaussian(rng, (3, 2)))
    with pytest.raises(PreconditionError):
        quantum_retract(encode(here.X), V, 0.5)


def test_quantum_qr_retraction_matches_classical(rng):
    for kind in (ManifoldKind.STIEFEL, ManifoldKind.GRASSMANNIAN):
        point = random_point(ManifoldDescriptor(kind, 8, 5), seed=6)
        V = project_tangent(point, complex_gaussian(rng, (8, 5)))
        moved = quantum_retract_qr(encode(point.X), encode(V.Z), 1.3)
        assert np.max(np.abs(decode(moved) - retract(point, V, 1.3, Retraction.QR).X)) <= 1e-10


def test_quantum_normalize_retraction_matches_classical(rng):
    point = random_point(ManifoldDescriptor.oblique(4, 3), seed=7)
    V = project_tangent(point, complex_gaussian(rng, (4, 3)))
    moved = quantum_retract_normalize(encode(point.X), encode(V.Z), 0.6)
    assert np.max(np.abs(decode(moved) - retract(point, V, 0.6, Retraction.NORMALIZE).X)) <= 1e-10


def test_prepare_uniform_on_full_register():
    state = prepare_uniform(RegisterShape(2, 2))
    assert np.allclose(state.amplitudes, [0.5, 0.5, 0.5, 0.5])
    X = decode(state)
    assert np.allclose(X, X[0, 0])
    assert np.allclose(np.linalg.norm(X, axis=0), 1.0)


def test_prepare_uniform_with_padding_gives_oblique_point():
    X = decode(prepare_uniform(RegisterShape(3, 5)))
    assert X.shape == (3, 5)
    assert np.allclose(X, X[0, 0])
    ManifoldPoint(ManifoldDescriptor.oblique(3, 5), X, tol=1e-12)


def test_state_records_list_nonzero_amplitudes():
    records = state_records(encode(np.eye(2)))
    assert records["scale"] == pytest.approx(np.sqrt(2.0))
    assert [index for index, _, _ in records["amplitudes"]] == [0, 3]


def test_transition_amplitude_between_two_encodings(rng):
    X, Z = complex_gaussian(rng, (3, 2)), complex_gaussian(rng, (3, 2))
    B = complex_gaussian(rng, (3, 3))
    bra, ket = encode(X), encode(Z)
    value = bra.scale * ket.scale * transition(bra, ket, IndexedOperator(basis_operator(2, 1, 0), B))
    assert value == pytest.approx(X[:, 1].conj() @ B @ Z[:, 0], abs=1e-10)
