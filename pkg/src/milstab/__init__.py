"""Instance-label stability of multiple-instance learning classifiers."""

__version__ = "0.1.0"

from .data import (Bag, BagStandardizer, Dataset, SplitSpec, SynthConfig,  # noqa: E402
                   generate_synthetic, load_dataset, load_musk1, random_split,
                   resample_train_bags, write_dataset)
from .evaluation import (ExperimentConfig, ParetoPoint, StabilityReport, auc,  # noqa: E402
                         best_by, pareto_frontier, run_experiment)
from .mil import (MILES, MILBoost, MiClassifier, SimpleMIL, make_classifier,  # noqa: E402
                  predict_bags, predict_instances)
from .stability import (agreement, count_agreements, mean_pairwise,  # noqa: E402
                        pairwise_matrix, positive_agreement, positiveness_histogram)

__all__ = [
    "Bag", "BagStandardizer", "Dataset", "SplitSpec", "SynthConfig", "generate_synthetic",
    "load_dataset", "load_musk1", "random_split", "resample_train_bags", "write_dataset",
    "ExperimentConfig", "ParetoPoint", "StabilityReport", "auc", "best_by",
    "pareto_frontier", "run_experiment", "MILES", "MILBoost", "MiClassifier", "SimpleMIL",
    "make_classifier", "predict_bags", "predict_instances", "agreement", "count_agreements",
    "mean_pairwise", "pairwise_matrix", "positive_agreement", "positiveness_histogram",
]
