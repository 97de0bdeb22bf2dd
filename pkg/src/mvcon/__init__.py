"""Multi-view contrastive representation learning on grouped views.

Lesion-level contrastive auxiliary task, its instance-level and
negative-ablation variants, the joint classification objective and the
evaluation protocol, all in float64 numpy with hand-written gradients.
"""

__version__ = "0.1.0"
