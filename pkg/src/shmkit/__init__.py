"""Strain-field reconstruction from sparse gauges with full-field uncertainty.

Sparse gauge readings are mapped onto the leading modes of a reconstruction
basis by a small Bayesian network.  Pre-training learns per-mode noise
scales (the aleatoric part); posterior sampling over the network parameters
yields an input-dependent spread (the epistemic part).  Both are pushed
back through the basis into full-field uncertainty maps.
"""

from .errors import ConfigError, DataError, NumericError
from .fields import (PcaBasis, StrainField, cev, denormalize, fit_pca,
                     minmax_normalize, project, reconstruct,
                     smallest_k_for_cev)
from .hmc import (DualAveraging, HmcConfig, PosteriorEnsemble,
                  effective_sample_size, hmc_step, leapfrog, sample_posterior)
from .network import (AdamState, BnnParams, LikelihoodScales, NetArchitecture,
                      PriorSpec, adam_step, forward, init_params,
                      make_potential, potential_energy, pretrain,
                      pretrain_loss)
from .pipeline import PipelineConfig, load_config
from .synthetic import (GaugeLayout, NoiseConfig, SpecimenSpec,
                        SyntheticDataset, bending_strain, clean_field,
                        crack_amplification, default_gauge_layout,
                        generate_dataset, loading_phase, sample_gauges)
from .uncertainty import (EnsemblePredictor, FieldMetrics, UncertaintyField,
                          aleatoric_field, bicubic_upsample, epistemic_field,
                          evaluate, predict_ensemble, to_physical)

__version__ = "0.1.0"
