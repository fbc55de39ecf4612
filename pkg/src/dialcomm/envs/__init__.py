from .base import StepResult, CommLayout, PhaseError
from .channel import apply_channel, draw_flip_mask, channel_op, ChannelError
from .matrix import MatrixEnv, MatrixEnvConfig, matrix_layout, SAME, DIFFERENT
from .particle import ParticleEnv, ParticleEnvConfig, Physics, Scenario, particle_layout, N_MOVES
from .protocol import ProtocolTable, protocol_table


def make_env(cfg, batch: int = 1):
    if isinstance(cfg, MatrixEnvConfig):
        return MatrixEnv(cfg, batch)
    if isinstance(cfg, ParticleEnvConfig):
        return ParticleEnv(cfg, batch)
    raise TypeError(f"unknown environment config {type(cfg).__name__}")


def make_layout(cfg) -> CommLayout:
    if isinstance(cfg, MatrixEnvConfig):
        return matrix_layout(cfg)
    return particle_layout(cfg)
