"""Retrocausal hidden-variable simulator for two-qubit Bell experiments.

The model assigns each particle pair a definite joint label drawn from the
Born weights of the prepared state *for the future measurement settings*,
plus particle positions guided by single-particle wavepackets.  Equilibrium
sampling reproduces the singlet correlations exactly; overriding either
hidden-variable distribution produces one of two complementary signalling
signatures (outcome rates vs spot shapes).
"""

from .dynamics import (
    COUPLING,
    FREE,
    DensityHistogram,
    IntegrationError,
    Trajectory,
    VelocityField,
    advect_positions,
    guidance_velocity,
    histogram_values,
    integrate_trajectory,
    transport_density,
)
from .ensemble import (
    BoxSampler,
    EnsembleSpec,
    GaussianSampler,
    MixtureSampler,
    OnticEnsemble,
    OnticState,
    SignallingReport,
    chsh,
    cross_shifted_positions,
    derive_seed,
    estimate_correlator,
    exact_chsh,
    marginal_position_density,
    measurement_independence_divergence,
    ontic_weights,
    outcome_bias_weights,
    predicted_spot_density,
    sample_ontic_states,
    signalling_scan,
)
from .experiment import (
    RunResult,
    SeparationError,
    WingRecord,
    WingRecordBatch,
    plate_readout,
    run_experiment,
)
from .packet import (
    GaussianPacket,
    PacketPairSnapshot,
    amplitude_overlap,
    branch_overlap,
    density,
    epistemic_branch_centers,
    freely_spread,
    sample_positions,
    translate_under_coupling,
)
from .spin import (
    LABELS,
    BornWeights,
    SpinEigenstate,
    TwoQubitState,
    UnitVector3,
    born_weights,
    eigenstate,
    exact_correlator,
    singlet,
    support_labels,
    triplet,
)

__version__ = "0.1.0"
