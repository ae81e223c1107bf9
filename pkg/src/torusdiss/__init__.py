"""torusdiss: dissipation times and correlation decay for noisy torus maps."""

__version__ = "0.1.0"

from .analysis import (BoundReport, CorrelationSeries, DecayFit,
                       DissipationReport, RateFit, TauResult, bound_report,
                       correlation_series, decay_fit, dissipation_report,
                       dissipation_time, pseudospectrum_distance, rate_fit,
                       supexp_bound_check)
from .errors import (BoundViolation, ConfigurationError, DimensionError,
                     NumericalFailure, TorusDissError, UnsupportedError)
from .fourier import (DenseOperator, FourierVector, TruncatedGrid, apply,
                      compose, dump_operator, dump_vector, l2_norm, load,
                      operator_norm, power, smallest_singular, sobolev_norm)
from .maps import (EntropyReport, ExpansionProfile, LinearToralMap,
                   SampledMap, TranslationMap, entropy_report,
                   ergodicity_test, expansion_profile, koopman_matrix,
                   perturbed_cat_map, sample_linear_map)
from .noise import (AlphaStableKernel, CustomSymbolKernel, MomentEstimate,
                    apply_noise, eigenvalue_on_mode, moment,
                    moment_fourier_check, noise_norm, poisson_sum_check,
                    smoothing_defect, symbol_at)
from .propagation import DenseEngine, LatticeOrbitEngine, NormCurve
