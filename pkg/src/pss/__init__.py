"""Verification and reconstruction toolkit for third-order PDEs
u_t - u_xxt = lam*u^2*u_xxx + G that describe pseudospherical surfaces."""

__version__ = "0.1.0"
