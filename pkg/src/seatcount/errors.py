"""Exception types raised across the package."""


class InvalidInput(ValueError):
    """An argument violates an operation's preconditions."""


class TrainingDiverged(RuntimeError):
    """Autoencoder loss became non-finite during training."""

    def __init__(self, message, epoch=None, batch=None, last_loss=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.last_loss = last_loss


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
