"""Simulator for a telecom-photon / NV-ensemble transducer built from an optical
cavity, a rare-earth spin ensemble, a microwave resonator and an NV ensemble."""

from .dynamics import (
    AmplitudeTrace,
    LindbladChannelSet,
    ReducedSpinModel,
    SimulationTrace,
    bad_cavity_reduce,
    evolve_amplitudes,
    evolve_master,
    evolve_pure,
)
from .hilbert import (
    DensityMatrix,
    InvariantError,
    ModeRegister,
    Operator,
    annihilation_op,
    basis_state,
    make_register,
    number_op,
    partial_trace,
)
from .metrics import (
    MetricSeries,
    concurrence,
    heralded_rate,
    mode_population,
    transfer_efficiency,
    transfer_fidelity,
)
from .models import (
    DarkBrightDecomposition,
    EffectiveCouplings,
    FullRedcParams,
    VirtualCouplingModel,
    build_effective_couplings,
    build_full_redc_hamiltonian,
    build_hybrid_hamiltonian,
    dark_bright_transform,
    virtual_coupling_reduce,
)
from .protocols import (
    CouplingSchedule,
    GaussianPulse,
    Segment,
    adiabatic_schedule,
    entanglement_schedule,
    gate_unitary,
    swap_protocol_schedule,
)

__version__ = "0.1.0"
