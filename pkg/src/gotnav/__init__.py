"""Goal-guided transformer navigation at desk scale.

Subpackages: ``numcore`` (autodiff core), ``got`` (goal-token encoder),
``navsim`` (2D navigation environment + expert), ``learn`` (BC pretraining
and SAC), ``xattn`` (attention analysis), plus ``cli`` orchestration.
"""

__version__ = "0.1.0"
