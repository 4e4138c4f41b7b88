from typing import Optional

from pydantic import BaseModel, ConfigDict

from src.enums.ERoute import ERoute


class Decision(BaseModel):
    """Routed outcome for one instance: a human (optionally a specific one) or an algorithm action."""

    model_config = ConfigDict(frozen=True)

    route: ERoute
    human: Optional[int] = None
    action: Optional[int] = None

    @classmethod
    def to_human(cls, human: Optional[int] = None) -> 'Decision':
        return cls(route=ERoute.HUMAN, human=human)

    @classmethod
    def to_algorithm(cls, action: int) -> 'Decision':
        return cls(route=ERoute.ALGORITHM, action=int(action))

    @property
    def is_human(self) -> bool:
        return self.route is ERoute.HUMAN
