"""Variance-reduced minibatch SGD via stratified sampling.

Train-set indices are partitioned into label-pure clusters; each minibatch
draws a Neyman-allocated quota from every cluster and reweights gradients
to stay unbiased, shrinking estimator variance relative to uniform
sampling. The package provides the sampler, exact variance accounting,
numeric checks of the convergence guarantees, an experiment CLI
(``strata-sgd``), and sklearn-style estimators.
"""

from .analysis import (
    BoundStep,
    BoundTrace,
    check_lemma1,
    check_lemma2,
    check_property1,
    check_theorem1,
    check_theorem2,
    empirical_variance,
    exact_stratified_variance,
    exact_uniform_variance,
    quadratic_stratified_variance,
    quadratic_uniform_variance,
)
from .data import (
    Dataset,
    FeatureVector,
    LabeledInstance,
    ParseError,
    align,
    dump_libsvm,
    parse_libsvm,
    parse_libsvm_file,
)
from .estimators import LabelPureKMeans, StratifiedSGDClassifier
from .objective import (
    Model,
    QuadraticProblem,
    batch_gradient,
    example_gradient,
    example_loss,
    full_gradient,
    full_objective,
    load_model,
    per_cluster_gradient_sse,
    quadratic_gradient,
    save_model,
    test_error,
    zero_model,
)
from .sampling import Minibatch, draw_stratified, draw_uniform, make_rng
from .sgd import (
    Constant,
    DivergenceError,
    EpochRecord,
    InverseAPlusHt,
    InverseLambdaT,
    MultiSeedResult,
    RunConfig,
    RunMetrics,
    multi_seed_run,
    run,
    sgd_step,
)
from .strata import (
    Allocation,
    Stratification,
    from_clusters,
    from_points,
    load_stratification,
    neyman_allocation,
    objective,
    per_class_kmeans,
    refine_weighted,
    save_stratification,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BoundStep",
    "BoundTrace",
    "Constant",
    "Dataset",
    "DivergenceError",
    "EpochRecord",
    "FeatureVector",
    "InverseAPlusHt",
    "InverseLambdaT",
    "LabelPureKMeans",
    "LabeledInstance",
    "Minibatch",
    "Model",
    "MultiSeedResult",
    "ParseError",
    "QuadraticProblem",
    "RunConfig",
    "RunMetrics",
    "Stratification",
    "StratifiedSGDClassifier",
    "align",
    "batch_gradient",
    "check_lemma1",
    "check_lemma2",
    "check_property1",
    "check_theorem1",
    "check_theorem2",
    "draw_stratified",
    "draw_uniform",
    "dump_libsvm",
    "empirical_variance",
    "exact_stratified_variance",
    "exact_uniform_variance",
    "example_gradient",
    "example_loss",
    "from_clusters",
    "from_points",
    "full_gradient",
    "full_objective",
    "load_model",
    "load_stratification",
    "make_rng",
    "multi_seed_run",
    "neyman_allocation",
    "objective",
    "per_class_kmeans",
    "per_cluster_gradient_sse",
    "quadratic_gradient",
    "quadratic_stratified_variance",
    "quadratic_uniform_variance",
    "refine_weighted",
    "run",
    "save_model",
    "save_stratification",
    "sgd_step",
    "test_error",
    "zero_model",
]
