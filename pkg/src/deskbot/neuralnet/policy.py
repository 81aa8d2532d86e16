"""Command-conditioned driving network.

Two input branches: an image tower (five stride-2 convolutions, each
followed by relu, batch normalization, and light dropout, then two dense
layers) and a small command embedding. The control head concatenates image
features with the command embedding, and the command is concatenated in a
second time before the final hidden layer so the maneuver signal survives
the bottleneck. Output is the two normalized wheel commands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm, Conv2d, Dense, Dropout, Flatten, Layer, Param, ReLU, Sequential, same_padding


@dataclass(frozen=True)
class PolicyArch:
    input_width: int = 256
    input_height: int = 96
    conv_filters: tuple[int, ...] = (32, 64, 96, 128, 256)
    conv_kernels: tuple[int, ...] = (5, 3, 3, 3, 3)
    conv_stride: int = 2
    image_fc: tuple[int, ...] = (128, 64)
    command_fc: tuple[int, ...] = (16, 16)
    control_fc: tuple[int, ...] = (64, 16)
    command_dim: int = 3
    outputs: int = 2
    conv_dropout: float = 0.2
    fc_dropout: float = 0.5

    def canonical(self) -> str:
        """Stable architecture string, hashed into weight files."""
        return ";".join(
            [
                f"in={self.input_width}x{self.input_height}",
                "conv=" + ",".join(map(str, self.conv_filters)),
                "k=" + ",".join(map(str, self.conv_kernels)),
                f"s={self.conv_stride}",
                "imgfc=" + ",".join(map(str, self.image_fc)),
                "cmdfc=" + ",".join(map(str, self.command_fc)),
                "ctrlfc=" + ",".join(map(str, self.control_fc)),
                f"cmd={self.command_dim}",
                f"out={self.outputs}",
                f"cdrop={self.conv_dropout}",
                f"fdrop={self.fc_dropout}",
            ]
        )

    def conv_output_shape(self) -> tuple[int, int, int]:
        h, w = self.input_height, self.input_width
        for k in self.conv_kernels:
            h, _, _ = same_padding(h, k, self.conv_stride)
            w, _, _ = same_padding(w, k, self.conv_stride)
        return h, w, self.conv_filters[-1]

    def flat_features(self) -> int:
        h, w, c = self.conv_output_shape()
        return h * w * c


def tiny_arch() -> PolicyArch:
    """Small float64-friendly variant for numerical gradient checks."""
    return PolicyArch(
        input_width=16,
        input_height=12,
        conv_filters=(4, 6),
        conv_kernels=(3, 3),
        image_fc=(10, 8),
        command_fc=(4, 4),
        control_fc=(6, 5),
        conv_dropout=0.2,
        fc_dropout=0.5,
    )


class DrivingPolicy:
    def __init__(self, arch: PolicyArch = PolicyArch(), seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.dtype = dtype
        rng = np.random.default_rng(seed)

        image_layers: list[Layer] = []
        in_ch = 3
        for i, (filters, kernel) in enumerate(zip(arch.conv_filters, arch.conv_kernels)):
            image_layers.append(
                Conv2d(
                    f"conv{i + 1}",
                    in_ch,
                    filters,
                    kernel,
                    arch.conv_stride,
                    rng,
                    dtype,
                    input_grad=i > 0,
                )
            )
            image_layers.append(ReLU())
            image_layers.append(BatchNorm(f"bn{i + 1}", filters, dtype=dtype))
            image_layers.append(Dropout(arch.conv_dropout))
            in_ch = filters
        image_layers.append(Flatten())
        in_f = arch.flat_features()
        for i, width in enumerate(arch.image_fc):
            image_layers.append(Dense(f"imgfc{i + 1}", in_f, width, rng, dtype))
            image_layers.append(ReLU())
            image_layers.append(Dropout(arch.fc_dropout))
            in_f = width
        self.image_tower = Sequential(image_layers)

        cmd_layers: list[Layer] = []
        in_f = arch.command_dim
        for i, width in enumerate(arch.command_fc):
            cmd_layers.append(Dense(f"cmdfc{i + 1}", in_f, width, rng, dtype))
            cmd_layers.append(ReLU())
            cmd_layers.append(Dropout(arch.fc_dropout))
            in_f = width
        self.command_tower = Sequential(cmd_layers)

        cmd_f = arch.command_fc[-1]
        img_f = arch.image_fc[-1]
        self.ctrl1 = Dense("ctrlfc1", img_f + cmd_f, arch.control_fc[0], rng, dtype)
        self.ctrl1_act = Sequential([ReLU(), Dropout(arch.fc_dropout)])
        self.ctrl2 = Dense("ctrlfc2", arch.control_fc[0] + cmd_f, arch.control_fc[1], rng, dtype)
        self.ctrl2_act = Sequential([ReLU(), Dropout(arch.fc_dropout)])
        self.head = Dense("out", arch.control_fc[1], arch.outputs, rng, dtype)

        self._modules: list[Layer] = [
            self.image_tower,
            self.command_tower,
            self.ctrl1,
            self.ctrl1_act,
            self.ctrl2,
            self.ctrl2_act,
            self.head,
        ]

    # ------------------------------------------------------------ forward

    def forward(
        self,
        images: np.ndarray,
        commands: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """images: (N, H, W, 3) float in [0, 1]; commands: (N, 3) one-hot."""
        if images.dtype != self.dtype:
            images = images.astype(self.dtype)
        if commands.dtype != self.dtype:
            commands = commands.astype(self.dtype)
        img = self.image_tower.forward(images, train, rng)
        cmd = self.command_tower.forward(commands, train, rng)
        self._cmd_width = cmd.shape[1]
        h1 = self.ctrl1_act.forward(
            self.ctrl1.forward(np.concatenate([img, cmd], axis=1), train, rng), train, rng
        )
        h2 = self.ctrl2_act.forward(
            self.ctrl2.forward(np.concatenate([h1, cmd], axis=1), train, rng), train, rng
        )
        return self.head.forward(h2, train, rng)

    def backward(self, grad_out: np.ndarray) -> None:
        cw = self._cmd_width
        g_h2 = self.head.backward(grad_out)
        g_cat2 = self.ctrl2.backward(self.ctrl2_act.backward(g_h2))
        g_h1 = g_cat2[:, :-cw]
        g_cmd = g_cat2[:, -cw:].copy()
        g_cat1 = self.ctrl1.backward(self.ctrl1_act.backward(g_h1))
        g_img = g_cat1[:, :-cw]
        g_cmd += g_cat1[:, -cw:]
        self.image_tower.backward(g_img)
        self.command_tower.backward(g_cmd)

    def __call__(self, images, commands, train=False, rng=None):
        return self.forward(images, commands, train, rng)

    # ------------------------------------------------------------ state

    def params(self) -> list[Param]:
        return [p for m in self._modules for p in m.params()]

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for m in self._modules:
            out.update(m.buffers())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {p.name: p.value for p in self.params()}
        state.update(self.buffers())
        return state

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch; missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ValueError(f"{name}: shape {src.shape} != expected {arr.shape}")
            arr[...] = src.astype(arr.dtype)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_dict().items()}


def count_params(net: DrivingPolicy) -> int:
    return sum(p.value.size for p in net.params())


# Published parameter totals of the reference architectures this model is
# sized against, for the comparison table.
BASELINE_PARAM_COUNTS = {
    "pilotnet": 9_600_000,
    "conditional-imitation": 10_700_000,
}
