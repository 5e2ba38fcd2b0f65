import inspect
import sys
from datetime import datetime
from typing import List, Optional

from sqlmodel import Field, Relationship, SQLModel


class ModelRegistry:
    _registry = {}

    def __init__(self):
        self.register_all()

    def register_all(self):
        for name, obj in inspect.getmembers(sys.modules[__name__]):
            if inspect.isclass(obj) and issubclass(obj, SQLModel) and obj is not SQLModel:
                self._registry[obj.__tablename__.lower()] = obj

    @classmethod
    def get_model(cls, name):
        """Retrieve a model class by its table name."""
        return cls._registry.get(name.lower(), None)


class RunRecord(SQLModel, table=True):
    run_id: Optional[int] = Field(default=None, primary_key=True)
    scenario: str = Field(index=True)
    mode: str
    steps: int
    time_step: float
    cost: float
    max_residual: float
    converged: bool
    created_at: datetime = Field(default_factory=datetime.now)
    totals: List['RunTotal'] = Relationship(back_populates="run")


class RunTotal(SQLModel, table=True):
    run_id: int = Field(foreign_key="runrecord.run_id", primary_key=True)
    series: str = Field(primary_key=True)
    # MWh
    energy: float
    run: RunRecord = Relationship(back_populates="totals")


if __name__ == "__main__":
    print("Models are ready for use with SQLModel.")
