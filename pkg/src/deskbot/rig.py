"""Hardware-in-the-loop wiring: simulator body driven through the firmware.

Every control decision is serialized onto the emulated serial link, so the
actions that reach the body are exactly the PWM-quantized values a physical
board would apply, and telemetry (odometry ticks, battery millivolts, sonar
centimeters) comes back through the same byte stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .firmware import (
    ControlMsg,
    Firmware,
    StatusMsg,
    action_to_pwm,
    parse_line,
    pwm_to_action,
    serialize,
)
from .simcore import Action, CameraConfig, DEFAULT_CAMERA, WorldState, sonar_distance, step


@dataclass
class Rig:
    world: WorldState
    firmware: Firmware = field(default_factory=Firmware)
    camera: CameraConfig = DEFAULT_CAMERA

    def __post_init__(self) -> None:
        self._status_buf = bytearray()
        self.last_status: StatusMsg | None = None

    def drive(self, action: Action, dt: float) -> Action:
        """One control period: send the action, step physics, sample sensors.

        Returns the action actually applied after PWM quantization.
        """
        msg = ControlMsg(action_to_pwm(action.a_l), action_to_pwm(action.a_r))
        self.firmware.feed_serial(serialize(msg))
        applied = Action(pwm_to_action(self.firmware.pwm_left), pwm_to_action(self.firmware.pwm_right))
        step(self.world, applied, dt)
        circumference = 2.0 * math.pi * self.world.body.wheel_radius
        revs_l = self.world.v_l * dt / circumference
        revs_r = self.world.v_r * dt / circumference
        self.firmware.tick(
            dt,
            revs_l,
            revs_r,
            self.world.battery_voltage,
            sonar_distance(self.world),
        )
        self._drain_status()
        return applied

    def _drain_status(self) -> None:
        self._status_buf.extend(self.firmware.read_serial())
        while True:
            nl = self._status_buf.find(b"\n")
            if nl < 0:
                break
            line = bytes(self._status_buf[:nl])
            del self._status_buf[: nl + 1]
            msg = parse_line(line)
            if isinstance(msg, StatusMsg):
                self.last_status = msg
