"""Discriminative null-space metric learning for cross-view re-identification."""
from .dataset import FeatureSet, SplitSpec, load_featureset, save_featureset, split_train_test, synth_generate
from .errors import DegenerateKernel, FormatError, NFSTError, NoNullSpace, ProtocolError
from .evaluation import EvalReport, cmc, distance_matrix, evaluate, fuse_scores, map_score, multi_query_pool
from .kernel import KernelNullModel, KernelSpec, kernel_matrix, project_kernel, rbf_width_auto, train_kernel_nfst
from .linear import LinearNullModel, ScatterPair, fisher_criterion, project_linear, scatter_matrices, train_linear_nfst
from .models import load_model, project, save_model
from .numeric import Tolerances, center_columns, orthonormal_basis, sym_eig
from .semisup import SemiConfig, build_cross_view_knn, make_pseudo_classes, train_semi_supervised

__version__ = "0.1.0"
