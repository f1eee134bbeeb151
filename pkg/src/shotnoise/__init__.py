"""Photon shot-noise dephasing of a dispersively coupled qubit.

Submodules:

* ``model``      parameters and closed-form rates, occupancies and budgets
* ``config``     JSON system descriptions with units in key names
* ``photon``     photon-number master equation and jump sampling
* ``quantum``    qubit x cavity density-matrix simulation, pulses, sequences
* ``montecarlo`` fringes from sampled photon trajectories
* ``analysis``   fringe/decay fits and population estimates
* ``io``         versioned CSV artifacts
* ``scenario``, ``cli``  scenario runner behind the ``shotnoise`` command
"""
from .analysis import (
    FitResult,
    estimate_populations,
    fit_decaying_sine,
    fit_exponential,
    fit_ramsey_reequilibration,
)
from .model import (
    TWO_PI,
    CavityMode,
    NoiseDrive,
    QubitParams,
    SystemModel,
    bose_einstein,
    coupling_scaling,
    dephasing_rate,
    dispersive_shift,
    injected_photons,
    mode_spectrum,
    multimode_dephasing,
    predict_t2,
    temperature_sweep,
    total_q,
)
from .montecarlo import mc_fringe, mc_sequence
from .photon import (
    PhotonDistribution,
    evolve_master,
    occupancy_mean,
    sample_trajectory,
    steady_state,
    thermal_distribution,
)
from .quantum import (
    FringeData,
    PulseSpec,
    SequenceSpec,
    build_liouvillian,
    echo_sequence,
    ramsey_sequence,
    readout_signal,
    run_sequence,
    selective_pulse,
    simulate_cavity_ringdown,
)

__version__ = "0.1.0"
