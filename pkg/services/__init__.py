# Services Module
# Orchestration used by the command-line interface

from services.output_writer import OutputWriter, file_digest, read_manifest, verify_manifest, write_csv
from services.fit_service import FitResult, FitService, PreprocessService, default_contrasts
from services.simulation_service import SimulationService
from services.report_service import merge_reports, read_report

__all__ = [
    'OutputWriter',
    'file_digest',
    'read_manifest',
    'verify_manifest',
    'write_csv',
    'FitResult',
    'FitService',
    'PreprocessService',
    'default_contrasts',
    'SimulationService',
    'merge_reports',
    'read_report',
]
