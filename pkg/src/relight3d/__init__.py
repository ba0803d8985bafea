"""relight3d: UV texture refinement through a differentiable software
rasterizer, background-light correction, skeletal deformation, and
shadow-catcher compositing over photographs."""

__version__ = "0.1.0"
