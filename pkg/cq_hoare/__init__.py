"""cq-hoare: classical-quantum while-programs, their semantics, wp calculus and Hoare checking."""

__version__ = "0.1.0"
