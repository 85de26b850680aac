from .backbone import DualDecoderVNet
from .textprompt import TextPromptBank
from .tmr import MultiplanarTextEnhancer, RepeatTextInjector
from .csa import ProjectionHead
from .text_semiseg import TextSemiSegNet

__all__ = [
    'DualDecoderVNet', 'TextPromptBank', 'MultiplanarTextEnhancer', 'RepeatTextInjector',
    'ProjectionHead', 'TextSemiSegNet',
]
