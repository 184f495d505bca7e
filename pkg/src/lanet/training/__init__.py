from lanet.training.common import TrainingError
from lanet.training.evaluation import evaluate, evaluate_model, model_from_checkpoint, predict
from lanet.training.experiments import ABLATION_VARIANTS, DEFAULT_ALPHAS, alpha_sweep, run_ablation
from lanet.training.screening import build_screening_model, epochs_to_accuracy, finetune_screening
from lanet.training.segmentation import RunResult, train_segmentation
