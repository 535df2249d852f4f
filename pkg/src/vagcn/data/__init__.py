from .container import DatasetContainer, read_container, write_container
from .mesh import Mesh, parse_off, sample_surface, write_off
from .synth import PART_CATEGORIES, SHAPES, synth_parts, synth_shapes
from .transforms import augment, normalize_unit_sphere, random_rotation
