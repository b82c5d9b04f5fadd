from .trace_csv import load_trace, save_trace, save_table, TRACE_HEADER
from .reports import write_json, fit_report, denoise_report
