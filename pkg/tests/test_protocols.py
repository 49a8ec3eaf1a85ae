import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvtransduce.dynamics import LindbladChannelSet, evolve_amplitudes, evolve_master, evolve_pure
from nvtransduce.hilbert import basis_state, make_register, state_vector
from nvtransduce.metrics import concurrence, population_of
from nvtransduce.models import EffectiveCouplings, single_excitation_block
from nvtransduce.protocols import (
    CouplingSchedule,
    GaussianPulse,
    Segment,
    adiabatic_schedule,
    entanglement_schedule,
    entanglement_time,
    gate_unitary,
    schedule_gate_product,
    single_excitation_gate,
    swap_protocol_schedule,
)

REF = EffectiveCouplings(G1=1.0, G2=0.2, Gnv=0.1)
NEG = EffectiveCouplings(G1=-1.0, G2=0.2, Gnv=0.1)
REF_RATES = LindbladChannelSet(kappa_a=0.1, kappa_b=0.001, gamma_c=0.04, gamma_d=0.01)
LOSSLESS = LindbladChannelSet()
H = 1 / np.sqrt(2)


def _run_pure(reg, schedule, occ):
    psi = evolve_pure(state_vector(reg, occ), schedule.hamiltonian(reg), (0, schedule.duration),
                      1e-3, breakpoints=schedule.boundaries)
    return psi


def _one_excitation(reg, psi):
    idx = [reg.dim // 2, reg.dim // 4, reg.dim // 8, 1]  # |1000>, |0100>, |0010>, |0001>
    return psi[idx]


def test_swap_durations():
    s = swap_protocol_schedule(REF)
    assert [seg.duration for seg in s.segments] == pytest.approx([np.pi / 2, 5 * np.pi / 2, 10 * np.pi / 2])
    assert s.duration == pytest.approx(8 * np.pi)
    # timings use |G1|, the coupling keeps its sign
    n = swap_protocol_schedule(NEG)
    assert n.segments[0].duration == pytest.approx(np.pi / 2) and n.segments[0].G1 == -1.0


@pytest.mark.parametrize("c", [REF, NEG])
def test_lossless_swap_reaches_nv(reg4, c):
    s = swap_protocol_schedule(c)
    tr = evolve_master(basis_state(reg4, (1, 0, 0, 0)), s.hamiltonian(reg4), LOSSLESS, (0, s.duration),
                       1e-3, breakpoints=s.boundaries, sample_every=1.0)
    assert population_of(tr.final.matrix, reg4, "d") == pytest.approx(1.0, abs=1e-6)


def test_reversed_swap_returns_to_optical(reg4):
    s = swap_protocol_schedule(REF).reversed()
    assert [seg.label for seg in s.segments] == ["b-d", "c-b", "a-c"]
    psi = _run_pure(reg4, s, (0, 0, 0, 1))
    assert abs(psi[8]) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_swap_equals_gate_product(reg4):
    s = swap_protocol_schedule(REF)
    amps = _one_excitation(reg4, _run_pure(reg4, s, (1, 0, 0, 0)))
    u = schedule_gate_product(s, "evolution")
    assert np.allclose(np.abs(amps) ** 2, np.abs(u[:, 0]) ** 2, atol=1e-8)
    assert np.allclose(amps, u[:, 0], atol=1e-8)


def test_gate_product_matches_one_excitation_propagator(reg4):
    # each gate is exp(-i G t h) restricted to the one-excitation sector
    from scipy.linalg import expm

    from nvtransduce.models import build_hybrid_hamiltonian

    for name, modes in (("G1", "ac"), ("G2", "bc"), ("Gnv", "bd")):
        kw = {"G1": 0.0, "G2": 0.0, "Gnv": 0.0, name: 0.7}
        block = single_excitation_block(build_hybrid_hamiltonian(reg4, EffectiveCouplings(**kw)), reg4)
        assert np.allclose(expm(-1j * 1.3 * block), single_excitation_gate(tuple(modes), 0.7, 1.3), atol=1e-12)


def test_segment_lookup_is_half_open():
    s = CouplingSchedule((Segment(1.0, G1=1.0), Segment(2.0, G2=0.5)))
    assert s.couplings_at(0.999) == (1.0, 0.0, 0.0)
    assert s.couplings_at(1.0) == (0.0, 0.5, 0.0)
    assert s.couplings_at(3.0) == (0.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        s.couplings_at(3.5)
    h = s.hamiltonian(make_register([(m, 2) for m in "abcd"]))
    assert h.constant_on(0.0, 1.0) and h.constant_on(1.0, 3.0)
    assert not h.constant_on(0.5, 1.5)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment(0.0)
    with pytest.raises(ValueError):
        Segment(1.0, G1=float("inf"))
    with pytest.raises(ValueError):
        Segment(1.0, detunings={"q": 1.0})
    with pytest.raises(ValueError):
        GaussianPulse(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        CouplingSchedule(())
    pulsed = adiabatic_schedule(GaussianPulse(1.0, 3.0, 15.0), 1.5)
    with pytest.raises(ValueError):
        pulsed.reversed()


def test_gaussian_pulse_shape():
    p = GaussianPulse(2.0, 3.0, 15.0)
    assert p(3.0) == 2.0
    assert p(0.0) == pytest.approx(2.0 * np.exp(-9 / 15))
    assert p(100.0) < 1e-100


def test_adiabatic_schedule_layout():
    s = adiabatic_schedule(GaussianPulse(1.0, 3.0, 15.0), 1.5, total_T=6.0, Gnv=0.1)
    assert s.boundaries == pytest.approx((0.0, 6.0, 6.0 + np.pi / 0.2))
    adiabatic, swap = s.segments
    assert adiabatic.Gnv == 0.0 and adiabatic.pulsed
    assert swap.Gnv == 0.1 and not swap.pulsed
    assert s.couplings_at(1.0) == pytest.approx((np.exp(-4 / 15), 1.5, 0.0))
    with pytest.raises(ValueError):
        adiabatic_schedule(GaussianPulse(1.0, 3.0, 15.0), 0.0)


@pytest.mark.parametrize("total_T", [2.0, 6.0])
def test_adiabatic_keeps_redc_below_half(reg4, total_T):
    s = adiabatic_schedule(GaussianPulse(1.0, 3.0, 15.0), 1.5, total_T, Gnv=0.1)
    tr = evolve_master(basis_state(reg4, (1, 0, 0, 0)), s.hamiltonian(reg4), REF_RATES, (0, s.duration),
                       1e-3, breakpoints=s.boundaries, sample_every=0.05)
    pops = [population_of(st_.matrix, reg4, "c") for st_ in tr.states]
    assert max(pops) < 0.5


def test_zero_pulse_leaves_optical_decaying(reg4):
    s = adiabatic_schedule(GaussianPulse(0.0, 3.0, 15.0), 1.5, 6.0, Gnv=0.1)
    tr = evolve_master(basis_state(reg4, (1, 0, 0, 0)), s.hamiltonian(reg4), REF_RATES, (0, s.duration),
                       1e-3, breakpoints=s.boundaries, sample_every=0.5)
    pops = np.array([population_of(x.matrix, reg4, "a") for x in tr.states])
    assert np.allclose(pops, np.exp(-0.1 * tr.times), atol=1e-9)
    assert max(population_of(x.matrix, reg4, "d") for x in tr.states) < 1e-20


def test_strong_slow_pulse_follows_dark_mode():
    # G1/G2 sweeps from ~0 to ~13, so the dark mode rotates from a to b
    pulse = GaussianPulse(20.0, 20.0, 60.0)
    amp = evolve_amplitudes([1, 0, 0, 0], pulse, 1.5, 0.0, LOSSLESS, (0, 20.0), 1e-3, sample_every=0.1)
    assert amp.population("b")[-1] > 0.99
    assert amp.population("c").max() < 0.05


def test_entanglement_time():
    assert entanglement_time(0.1, H) == pytest.approx(np.pi / 4 / 0.1)
    assert entanglement_time(-2.0, 1.0) == pytest.approx(np.pi / 4)
    with pytest.raises(ValueError):
        entanglement_time(1.0, 1.5)


def test_entanglement_final_state_matches_printed_vector(reg4):
    s = entanglement_schedule(REF, H)
    amps = _one_excitation(reg4, _run_pure(reg4, s, (0, 0, 0, 1)))
    printed = np.array([H, 0, 0, -1j * H])  # |1>_a|0>_d - i|0>_a|1>_d
    overlap = np.vdot(printed, amps)
    assert abs(overlap) == pytest.approx(1.0, abs=1e-8)


def test_entanglement_intermediate_magnitudes(reg4):
    s = entanglement_schedule(REF, H)
    cuts = s.boundaries
    ham = s.hamiltonian(reg4)
    psi = state_vector(reg4, (0, 0, 0, 1))
    mags = []
    for k in (1, 2):
        out = evolve_pure(psi, ham, (0, cuts[k]), 1e-3, breakpoints=cuts)
        mags.append(np.abs(_one_excitation(reg4, out)))
    # after the split: shared between b and d; after b -> c: shared between c and d
    assert np.allclose(mags[0], [0, H, 0, H], atol=1e-8)
    assert np.allclose(mags[1], [0, 0, H, H], atol=1e-8)


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_entanglement_endpoints_give_no_concurrence(reg4, alpha):
    s = entanglement_schedule(REF, alpha)
    assert len(s.segments) == (2 if alpha == 0 else 3)
    tr = evolve_master(basis_state(reg4, (0, 0, 0, 1)), s.hamiltonian(reg4), LOSSLESS, (0, s.duration),
                       1e-3, breakpoints=s.boundaries, sample_every=1.0)
    assert concurrence(tr.final) < 1e-6
    want_d = 1.0 if alpha == 0 else 0.0
    assert population_of(tr.final.matrix, reg4, "d") == pytest.approx(want_d, abs=1e-6)


def test_reverse_entanglement_lossless(reg4):
    s = entanglement_schedule(REF, H, reverse=True)
    assert [seg.label for seg in s.segments] == ["a-c split", "c-b", "b-d"]
    tr = evolve_master(basis_state(reg4, (1, 0, 0, 0)), s.hamiltonian(reg4), LOSSLESS, (0, s.duration),
                       1e-3, breakpoints=s.boundaries, sample_every=1.0)
    assert concurrence(tr.final) == pytest.approx(1.0, abs=1e-6)


def test_gate_identities():
    iswap = gate_unitary(1.0, np.pi / 2)
    assert np.max(np.abs(iswap - np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]]))) < 1e-12
    root = gate_unitary(2.0, np.pi / 8)
    want = np.array([[1, 0, 0, 0], [0, H, 1j * H, 0], [0, 1j * H, H, 0], [0, 0, 0, 1]])
    assert np.max(np.abs(root - want)) < 1e-12
    assert np.array_equal(gate_unitary(0.3, 0.0), np.eye(4))
    assert np.allclose(gate_unitary(0.4, 1.1, "evolution"), gate_unitary(0.4, 1.1).conj(), atol=0)
    with pytest.raises(ValueError):
        gate_unitary(1.0, 1.0, "other")


@given(st.floats(-3, 3), st.floats(-5, 5), st.floats(-5, 5))
def test_gate_unitary_group(g, t1, t2):
    u1, u2 = gate_unitary(g, t1), gate_unitary(g, t2)
    assert np.max(np.abs(u1 @ u1.conj().T - np.eye(4))) < 1e-12
    assert np.max(np.abs(u1 @ u2 - gate_unitary(g, t1 + t2))) < 1e-12
