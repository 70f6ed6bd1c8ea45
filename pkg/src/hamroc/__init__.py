"""hamroc: Hamiltonian model order reduction and control for planar
mass-spring-damper networks.

The toolkit compresses high-dimensional mass-spring-damper systems into
low-dimensional latent Hamiltonian systems through trained autoencoders,
simulates the reduced dynamics, and regulates the full system's posture
with a latent-space controller.
"""

__version__ = "0.1.0"
