"""
Training state and evaluation reports
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field


class HorizonMetrics(BaseModel):
    """Errors at one forecast step, or over all steps"""

    horizon: str
    mae: float = Field(ge=0)
    rmse: float = Field(ge=0)
    mape_percent: float = Field(ge=0)


class MetricsReport(BaseModel):
    """Per-horizon metrics plus the all-horizon aggregate"""

    horizons: List[HorizonMetrics]
    overall: HorizonMetrics

    def rows(self) -> List[HorizonMetrics]:
        return [*self.horizons, self.overall]

    def at(self, horizon: int) -> HorizonMetrics:
        for row in self.horizons:
            if row.horizon == str(horizon):
                return row
        raise KeyError(horizon)


@dataclass
class EpochRecord:
    """One row of the history CSV"""

    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float
    val_mape: float
    lr: float
    r: int


@dataclass
class TrainState:
    """Mutable curriculum loop state"""

    it: int = 1
    r: int = 1
    best_val_mae: float = float("inf")
    best_epoch: int = 0
    epochs_without_improvement: int = 0
    moments: Dict[str, np.ndarray] = field(default_factory=dict)
    history: List[EpochRecord] = field(default_factory=list)
    best_params: Optional[Dict[str, np.ndarray]] = None
