from enum import Enum


class EMethod(Enum):
    HUMAN = "human"
    AO = "ao"
    TS = "ts"
    JC = "jc"
    JCP = "jcp"
    AO_EC = "ao-ec"
    TS_EC = "ts-ec"
    JC_EC = "jc-ec"
    JC_OD = "jc-od"

    @classmethod
    def from_value(cls, value: str) -> 'EMethod':
        return cls(value.lower())

    @property
    def is_ec(self) -> bool:
        return self in (EMethod.AO_EC, EMethod.TS_EC, EMethod.JC_EC)

    @property
    def has_router(self) -> bool:
        return self not in (EMethod.HUMAN, EMethod.AO, EMethod.AO_EC)

    @property
    def is_trainable(self) -> bool:
        return self is not EMethod.HUMAN
