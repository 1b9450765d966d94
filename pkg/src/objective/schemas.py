from typing import Dict

from pydantic import BaseModel, ConfigDict, Field, model_validator

TERMS = ("content", "style", "depth", "dog")


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    content_w: float = Field(default=1e5, ge=0)
    style_w: float = Field(default=1e10, ge=0)
    depth_w: float = Field(default=1e3, ge=0)
    dog_w: float = Field(default=1e3, ge=0)

    def weight_for(self, term: str) -> float:
        return float(getattr(self, f"{term}_w"))

    def without(self, *terms: str) -> "LossWeights":
        """Copy with the named terms' weights set to exactly 0."""
        return self.model_copy(update={f"{term}_w": 0.0 for term in terms})


class LossReport(BaseModel):
    content: float = Field(ge=0)
    style: float = Field(ge=0)
    depth: float = Field(ge=0)
    dog: float = Field(ge=0)
    total: float = Field(ge=0)
    style_layers: Dict[str, float] = {}
    # weight * term for every term
    contributions: Dict[str, float] = {}

    @model_validator(mode="after")
    def _check_total(self):
        if self.contributions:
            expected = sum(self.contributions.values())
            if abs(self.total - expected) > 1e-6 * max(1.0, abs(expected)):
                raise ValueError(f"total {self.total} does not equal the weighted sum {expected}")
        return self

    def term(self, name: str) -> float:
        return float(getattr(self, name))
