# importing the package registers every checkpointable module kind
from app.ml.models.content_encoder import ContentEncoder
from app.ml.models.discriminator import MultiScaleSpectrogramDiscriminator
from app.ml.models.projection import MelProjection
from app.ml.models.resunet import ResUNet
from app.ml.models.score_net import ScoreNetwork
from app.ml.models.speaker_encoder import SpeakerEncoder

__all__ = [
    "ContentEncoder",
    "MelProjection",
    "MultiScaleSpectrogramDiscriminator",
    "ResUNet",
    "ScoreNetwork",
    "SpeakerEncoder",
]
