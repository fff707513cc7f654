from .scene import load_obj
