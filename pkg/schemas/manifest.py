# Run manifest written next to every command's outputs

from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from config.app_config import SOFTWARE_VERSION


class RunManifest(BaseModel):
    command: str
    arguments: Dict[str, Any] = Field(default_factory=dict, description="Exact CLI arguments used")
    config: Dict[str, Any] = Field(default_factory=dict, description="Resolved configuration snapshot")
    seeds: List[int] = Field(default_factory=list)
    input_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 of each input file")
    output_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 of each output file")
    software_version: str = SOFTWARE_VERSION
    started_at: Optional[str] = None
    timings: Dict[str, float] = Field(default_factory=dict, description="Wall-clock seconds per stage")

    def stamp_start(self) -> None:
        self.started_at = datetime.now(timezone.utc).isoformat()
