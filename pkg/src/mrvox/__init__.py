"""Multi-resolution spatio-temporal modeling of voxel-grid time series."""

from .activation import ActivationConfig, ActivationFit, bh_fdr, fit_activation, fourier_basis, voxel_tests
from .dataset import BlockDesign, FmriDataset, Parcellation, load_dataset, write_dataset
from .design import HrfSpec, bold_regressor, canonical_hrf, design_matrix
from .errors import (ConvergenceError, DatasetError, FitError, MrvoxError,
                     NonStationaryError, NotPositiveDefiniteError,
                     RankDeficientDesignError, StateError)
from .regional import (CvConfig, GlassoResult, RegionalResiduals, cv_lambda, edges,
                     glasso, kkt_residual, roi_means, sample_cov)
from .localcov import (AnisoParams, RoiCovModel, SubregionPartition, aniso_distance,
                       fit_roi_cov, krige, matern_corr, mixture_cov, mixture_weights,
                       nonstat_cov, roi_error_cov)
from .modelselect import GridConfig, SelectionResult, bic_score, bic_search, partition_roi
from .numerics import SimplexConfig, gaussian_loglik, nelder_mead, smoothing_spline
from .parallel import rng_stream
from .pipeline import PipelineConfig, run_pipeline, write_reports
from .shrinkage import ShrinkageConfig, ShrinkageResult, directional_contrasts, select_delta
from .simulate import (PhantomSpec, RegionTruth, StudyReport, default_spec,
                       gen_phantom, power_curve, run_fp_study, run_krige_study)
from .state import FitState, load_state, save_state
from .temporal import (Ar2Params, VoxelFit, ar2_autocovariance, fit_voxel, gls_beta,
                       profile_loglik, standardized_residuals)

__version__ = "0.1.0"
