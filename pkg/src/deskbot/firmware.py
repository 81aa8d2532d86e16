"""Microcontroller firmware emulator and its serial line protocol.

The board speaks an ASCII protocol, one message per line, LF-terminated,
lines at most 64 bytes including the terminator:

    c,<left>,<right>   host -> board   signed PWM, -255..255
    i,<left>,<right>   host -> board   indicator LEDs, 0 or 1
    s,<mv>,<tl>,<tr>,<cm>   board -> host   battery millivolts, wheel tick
                                            counters, sonar centimeters

Integers are canonical decimal: no leading zeros, no "-0", no whitespace.
Anything that does not parse is dropped and counted, never fatal.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

MAX_LINE_BYTES = 64  # including the trailing LF
PWM_LIMIT = 255

_INT_RE = re.compile(rb"\A(0|-?[1-9][0-9]*)\Z")


@dataclass(frozen=True)
class ControlMsg:
    left: int
    right: int

    tag = "c"


@dataclass(frozen=True)
class IndicatorMsg:
    left: bool
    right: bool

    tag = "i"


@dataclass(frozen=True)
class StatusMsg:
    millivolts: int
    ticks_left: int
    ticks_right: int
    sonar_cm: int

    tag = "s"


Message = ControlMsg | IndicatorMsg | StatusMsg


def _parse_int(token: bytes, lo: int, hi: int) -> int | None:
    if not _INT_RE.match(token):
        return None
    value = int(token)
    if value < lo or value > hi:
        return None
    return value


def parse_line(line: bytes) -> Message | None:
    """Parse one protocol line (without the LF). None if malformed."""
    if len(line) > MAX_LINE_BYTES - 1:
        return None
    parts = line.split(b",")
    tag = parts[0]
    if tag == b"c" and len(parts) == 3:
        left = _parse_int(parts[1], -PWM_LIMIT, PWM_LIMIT)
        right = _parse_int(parts[2], -PWM_LIMIT, PWM_LIMIT)
        if left is None or right is None:
            return None
        return ControlMsg(left, right)
    if tag == b"i" and len(parts) == 3:
        left = _parse_int(parts[1], 0, 1)
        right = _parse_int(parts[2], 0, 1)
        if left is None or right is None:
            return None
        return IndicatorMsg(bool(left), bool(right))
    if tag == b"s" and len(parts) == 5:
        fields = [_parse_int(p, 0, 2**32 - 1) for p in parts[1:]]
        if any(f is None for f in fields):
            return None
        return StatusMsg(*fields)
    return None


def serialize(msg: Message) -> bytes:
    """Canonical wire form of a message, LF-terminated."""
    if isinstance(msg, ControlMsg):
        body = f"c,{msg.left},{msg.right}"
    elif isinstance(msg, IndicatorMsg):
        body = f"i,{int(msg.left)},{int(msg.right)}"
    elif isinstance(msg, StatusMsg):
        body = f"s,{msg.millivolts},{msg.ticks_left},{msg.ticks_right},{msg.sonar_cm}"
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    encoded = body.encode("ascii") + b"\n"
    if len(encoded) > MAX_LINE_BYTES:
        raise ValueError(f"serialized line exceeds {MAX_LINE_BYTES} bytes: {encoded!r}")
    return encoded


def action_to_pwm(a: float) -> int:
    """Normalized command to signed PWM; rounds half away from zero."""
    if not math.isfinite(a):
        raise ValueError(f"action must be finite, got {a}")
    magnitude = math.floor(abs(a) * PWM_LIMIT + 0.5)
    pwm = int(math.copysign(magnitude, a))
    return max(-PWM_LIMIT, min(PWM_LIMIT, pwm))


def pwm_to_action(pwm: int) -> float:
    return pwm / PWM_LIMIT


@dataclass
class FirmwareConfig:
    telemetry_interval: float = 0.05  # s
    ticks_per_rev: int = 20
    adc_bits: int = 10
    adc_ref_voltage: float = 5.0
    divider_ratio: float = 3.0  # battery volts per ADC input volt
    battery_ema_alpha: float = 0.1


@dataclass
class Firmware:
    """Board-side state machine.

    Host bytes go in through feed_serial; telemetry bytes come back from
    read_serial. tick() advances board time and samples the "hardware"
    (wheel rotation, battery rail, sonar echo) supplied by the caller.
    """

    config: FirmwareConfig = field(default_factory=FirmwareConfig)
    pwm_left: int = 0
    pwm_right: int = 0
    indicator_left: bool = False
    indicator_right: bool = False
    ticks_left: int = 0
    ticks_right: int = 0
    parse_errors: int = 0

    def __post_init__(self) -> None:
        self._rx = bytearray()
        self._rx_overflow = False
        self._tx = bytearray()
        self._tick_residual_l = 0.0
        self._tick_residual_r = 0.0
        self._adc_ema: float | None = None
        self._since_telemetry = 0.0
        self._sonar_cm = 0

    # -------------------------------------------------- serial, host side

    def feed_serial(self, data: bytes) -> None:
        for byte in data:
            if byte == 0x0A:
                if self._rx_overflow:
                    self._rx_overflow = False
                    self.parse_errors += 1
                else:
                    self._handle_line(bytes(self._rx))
                self._rx.clear()
                continue
            if self._rx_overflow:
                continue
            self._rx.append(byte)
            if len(self._rx) > MAX_LINE_BYTES - 1:
                self._rx.clear()
                self._rx_overflow = True

    def read_serial(self) -> bytes:
        out = bytes(self._tx)
        self._tx.clear()
        return out

    def _handle_line(self, line: bytes) -> None:
        msg = parse_line(line)
        if msg is None:
            self.parse_errors += 1
            return
        if isinstance(msg, ControlMsg):
            self.pwm_left = msg.left
            self.pwm_right = msg.right
        elif isinstance(msg, IndicatorMsg):
            self.indicator_left = msg.left
            self.indicator_right = msg.right
        else:
            # Status is board-to-host only; receiving one is a host bug.
            self.parse_errors += 1

    # -------------------------------------------------- board tick

    def tick(
        self,
        dt: float,
        wheel_revs_left: float,
        wheel_revs_right: float,
        battery_voltage: float,
        sonar_m: float,
    ) -> None:
        """Advance dt seconds given hardware observations for the interval.

        wheel_revs_* are signed wheel revolutions during the interval; the
        encoders are single-channel, so ticks accumulate by magnitude with
        the fractional remainder carried between calls.
        """
        self._tick_residual_l += abs(wheel_revs_left) * self.config.ticks_per_rev
        self._tick_residual_r += abs(wheel_revs_right) * self.config.ticks_per_rev
        whole_l = int(self._tick_residual_l)
        whole_r = int(self._tick_residual_r)
        self.ticks_left += whole_l
        self.ticks_right += whole_r
        self._tick_residual_l -= whole_l
        self._tick_residual_r -= whole_r

        full_scale = (1 << self.config.adc_bits) - 1
        adc_in = battery_voltage / self.config.divider_ratio
        raw = max(0, min(full_scale, round(adc_in / self.config.adc_ref_voltage * full_scale)))
        if self._adc_ema is None:
            self._adc_ema = float(raw)
        else:
            a = self.config.battery_ema_alpha
            self._adc_ema = a * raw + (1.0 - a) * self._adc_ema

        self._sonar_cm = max(0, round(sonar_m * 100.0))

        self._since_telemetry += dt
        while self._since_telemetry >= self.config.telemetry_interval - 1e-12:
            self._since_telemetry -= self.config.telemetry_interval
            self._tx.extend(serialize(self.status()))

    def status(self) -> StatusMsg:
        full_scale = (1 << self.config.adc_bits) - 1
        ema = self._adc_ema if self._adc_ema is not None else 0.0
        mv = round(ema / full_scale * self.config.adc_ref_voltage * self.config.divider_ratio * 1000.0)
        return StatusMsg(
            millivolts=int(mv),
            ticks_left=self.ticks_left,
            ticks_right=self.ticks_right,
            sonar_cm=self._sonar_cm,
        )


# ------------------------------------------------------------------ fuzzing

def fuzz_roundtrip(n_lines: int, seed: int = 0) -> dict:
    """Throw n_lines of hostile and near-valid input at the protocol.

    Every generated line goes through parse_line and into a live Firmware's
    serial buffer. Parsed messages must survive serialize -> parse_line
    unchanged. Returns counters; "crashes" and "roundtrip_failures" must be
    zero for a healthy protocol.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    fw = Firmware()
    parsed = rejected = roundtrip_failures = crashes = 0
    alphabet = b"cis,-0123456789 \t\r\nxZ~\x00\xff"

    for _ in range(n_lines):
        kind = rng.integers(0, 4)
        if kind == 0:  # canonical control/indicator/status
            which = rng.integers(0, 3)
            if which == 0:
                line = serialize(
                    ControlMsg(
                        int(rng.integers(-PWM_LIMIT, PWM_LIMIT + 1)),
                        int(rng.integers(-PWM_LIMIT, PWM_LIMIT + 1)),
                    )
                )[:-1]
            elif which == 1:
                line = serialize(
                    IndicatorMsg(bool(rng.integers(0, 2)), bool(rng.integers(0, 2)))
                )[:-1]
            else:
                line = serialize(
                    StatusMsg(*(int(rng.integers(0, 2**32)) for _ in range(4)))
                )[:-1]
        elif kind == 1:  # canonical line with one mutated byte
            base = bytearray(
                serialize(
                    ControlMsg(
                        int(rng.integers(-PWM_LIMIT, PWM_LIMIT + 1)),
                        int(rng.integers(-PWM_LIMIT, PWM_LIMIT + 1)),
                    )
                )[:-1]
            )
            if base:
                pos = int(rng.integers(0, len(base)))
                base[pos] = int(rng.integers(0, 256))
            line = bytes(base)
        elif kind == 2:  # random soup from the protocol alphabet
            n = int(rng.integers(0, 80))
            idx = rng.integers(0, len(alphabet), n)
            line = bytes(alphabet[i] for i in idx)
        else:  # arbitrary binary garbage
            n = int(rng.integers(0, 80))
            line = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        line = line.replace(b"\n", b" ")

        try:
            msg = parse_line(line)
            if msg is None:
                rejected += 1
            else:
                parsed += 1
                if parse_line(serialize(msg)[:-1]) != msg:
                    roundtrip_failures += 1
            fw.feed_serial(line + b"\n")
            fw.tick(0.01, 0.0, 0.0, 11.1, 1.0)
            fw.read_serial()
        except Exception:
            crashes += 1

    return {
        "lines": n_lines,
        "parsed": parsed,
        "rejected": rejected,
        "roundtrip_failures": roundtrip_failures,
        "crashes": crashes,
        "firmware_parse_errors": fw.parse_errors,
    }
