import numpy as np

from rampmeter.simulation import TrajectoryLog


def make_log(seg_veh, seg_Q, lengths, interval_s=60.0, ramp_veh=None, origin_veh=None, seg_V=None):
    """Hand-built log; arrays are (records, segments) and (records, ramps)."""
    seg_veh = np.atleast_2d(np.asarray(seg_veh, dtype=float))
    n, S = seg_veh.shape
    ramp_veh = np.zeros((n, 0)) if ramp_veh is None else np.atleast_2d(np.asarray(ramp_veh, dtype=float))
    R = ramp_veh.shape[1]
    z = lambda *shape: np.zeros(shape)
    return TrajectoryLog(
        interval_s=interval_s,
        dt_s=1.0,
        t_s=np.arange(n) * interval_s,
        segment_names=tuple(f"S{i + 1}" for i in range(S)),
        lengths_km=tuple(lengths),
        seg_Q=np.atleast_2d(np.asarray(seg_Q, dtype=float)),
        seg_To=z(n, S),
        seg_V=z(n, S) if seg_V is None else np.atleast_2d(np.asarray(seg_V, dtype=float)),
        seg_veh=seg_veh,
        ramp_names=tuple(f"R{j + 1}" for j in range(R)),
        ramp_GD=np.full((n, R), 40.0),
        ramp_override=np.zeros((n, R), dtype=bool),
        ramp_setpoint=z(n, R),
        ramp_queue_m=ramp_veh * 5.5,
        ramp_veh=ramp_veh,
        ramp_admitted=z(n, R),
        ramp_demand=z(n, R),
        origin_demand=z(n),
        origin_admitted=z(n),
        origin_queue_m=z(n) if origin_veh is None else np.asarray(origin_veh, dtype=float) * 5.5,
        origin_veh=z(n) if origin_veh is None else np.asarray(origin_veh, dtype=float),
    )
