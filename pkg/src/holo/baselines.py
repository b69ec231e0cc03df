"""Classical reconstructions used as references."""

import numpy as np

from .exceptions import ParameterError
from .optics import back_propagate, propagate

__all__ = ["backprop_only", "gerchberg_saxton"]


def backprop_only(h, optics):
    """Single back-propagation of the hologram (``sqrt(H)`` if ``optics.sqrt_input``)."""
    return back_propagate(h, optics)


def gerchberg_saxton(h, optics, iters=100, support=None, return_history=False):
    """Error-reduction iterations between sensor and object planes.

    Object-plane constraints: amplitude clamped to at most 1 and, when a
    background ``support`` mask is given (1 = background), the field reset
    to 1+0j there. Sensor-plane constraint: amplitude replaced by
    ``sqrt(H)`` keeping the phase.

    With ``return_history`` the sensor-plane amplitude residual
    ``|| |P_z(U_k)| - sqrt(H) ||_2`` of each constrained object estimate
    ``U_k`` is returned as well (entry ``k-1`` belongs to iteration ``k``).
    """
    if iters < 1:
        raise ParameterError(f"iters must be >= 1, got {iters}")
    amp = np.sqrt(np.clip(np.asarray(h, dtype=np.float64), 0.0, None))
    background = None if support is None else np.asarray(support).astype(bool)
    sensor = amp.astype(np.complex128)
    history = []
    obj = None
    for _ in range(iters):
        obj = propagate(sensor, optics, -optics.z_um)
        mag = np.abs(obj)
        over = mag > 1.0
        obj[over] /= mag[over]
        if background is not None:
            obj[background] = 1.0
        forward = propagate(obj, optics, optics.z_um)
        if return_history:
            history.append(float(np.linalg.norm(np.abs(forward) - amp)))
        sensor = amp * np.exp(1j * np.angle(forward))
    if return_history:
        return obj, np.array(history)
    return obj
