"""Photon packet state shared by the launchers and the transport loop.

Inside the kernels a packet is two small arrays: ``phf`` (float64[9]: position,
direction, remaining scattering length s, weight w, time t) and ``phi``
(int64[5]: medium, AS handle, status, kind of the last event, record of the
last surface event or -1).
"""

from dataclasses import dataclass, field

import numpy as np

# status codes
ALIVE = 0
EXITED = 1
TIMEOUT = 2
LEAKED = 3
STATUS_NAMES = ("alive", "exited", "timeout", "leaked")

# event kinds (also used in recorded leak trajectories)
EV_LAUNCH = 0
EV_SCATTER = 1
EV_BOUNDARY = 2
EV_EXIT = 3
EV_LEAK = 4
EV_TIMEOUT = 5
EVENT_NAMES = ("launch", "scatter", "boundary", "exit", "leak", "timeout")


@dataclass
class PhotonState:
    p: np.ndarray
    v: np.ndarray
    s: float
    w: float = 1.0
    t: float = 0.0
    medium_id: int = 0
    rng: np.ndarray = field(default=None, repr=False)
    as_handle: int = 0
    status: int = ALIVE
    last_event: int = EV_LAUNCH
    last_record: int = -1

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64).reshape(3).copy()
        self.v = np.asarray(self.v, dtype=np.float64).reshape(3).copy()

    @property
    def alive(self):
        return self.status == ALIVE

    @property
    def status_name(self):
        return STATUS_NAMES[self.status]

    def to_arrays(self):
        phf = np.empty(9)
        phf[0:3] = self.p
        phf[3:6] = self.v
        phf[6:9] = (self.s, self.w, self.t)
        phi = np.array([self.medium_id, self.as_handle, self.status, self.last_event,
                        self.last_record], dtype=np.int64)
        return phf, phi

    @classmethod
    def from_arrays(cls, phf, phi, rng=None):
        return cls(phf[0:3], phf[3:6], float(phf[6]), float(phf[7]), float(phf[8]),
                   int(phi[0]), rng, int(phi[1]), int(phi[2]), int(phi[3]), int(phi[4]))

    def copy(self):
        rng = None if self.rng is None else self.rng.copy()
        return PhotonState(self.p, self.v, self.s, self.w, self.t, self.medium_id, rng,
                           self.as_handle, self.status, self.last_event, self.last_record)
