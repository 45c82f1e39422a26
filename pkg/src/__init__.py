# tenslet: tensor needlet transforms for tangent fields on the sphere
__version__ = "1.0.0"
