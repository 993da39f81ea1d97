from .model import (
    CNNClassifier,
    ModelConfig,
    SegmentCNN,
    SentenceCNN,
    ShapeError,
    conv_backward,
    conv_forward,
    cross_entropy,
    softmax,
)
from .optim import RMSPropConfig, rmsprop_step
from .training import (
    EpochStats,
    TrainConfig,
    binary_f1,
    encode_pairs,
    gradient_check,
    numerical_gradients,
    predict,
    predict_proba,
    relative_error,
    train,
)
