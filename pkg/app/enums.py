from enum import Enum, IntEnum


class LearnerKindEnum(Enum):
    MLR = "MLR"
    ARIMAX = "ARIMAX"
    RF = "RF"
    GBT = "GBT"


class MethodEnum(Enum):
    # Declaration order is the alphabetical order used to break rank ties.
    ELR = "ELR"
    ERF = "ERF"
    ETS = "ETS"
    EXGBOOST = "EXGBoost"

    @property
    def kind(self) -> LearnerKindEnum:
        match self:
            case MethodEnum.ELR:
                return LearnerKindEnum.MLR
            case MethodEnum.ERF:
                return LearnerKindEnum.RF
            case MethodEnum.ETS:
                return LearnerKindEnum.ARIMAX
            case MethodEnum.EXGBOOST:
                return LearnerKindEnum.GBT


class OutlookIndicatorEnum(Enum):
    GDP_WW = "GDP_WW"
    GDP_CN = "GDP_CN"
    GDP_EU = "GDP_EU"
    FX_RMB = "FX_RMB"
    FX_EUR = "FX_EUR"


class LeadBandIntEnum(IntEnum):
    SHORT_MAX = 5
    LONG_MIN = 12


class CellStatusEnum(Enum):
    OK = "ok"
    FAILED = "failed"
