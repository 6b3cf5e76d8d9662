from .strip import Kind, Params, StripTriangulation, SpinConfiguration, DEFAULT_STRIP_CAP
from .strip import count_strips, enumerate_strips, strips_of_size, spin_block
from .strip import strip_energy, strip_energies, interaction_energy, down_spins, up_spins, cylinder_energy
