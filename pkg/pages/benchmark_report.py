import os
import streamlit as st  # type: ignore
import pandas as pd
from typing import List
from utils.ui_helper import UIHelper
from cyclescore.harness import BenchmarkRun, report

RUNS_FOLDER = "runs"


class ReportBrowser:
    @staticmethod
    def list_runs(folder: str) -> List[str]:
        """Return run files (.json) in the folder, sorted by name."""
        try:
            return sorted(f for f in os.listdir(folder) if f.endswith(".json"))
        except FileNotFoundError:
            return []

    @staticmethod
    def load_runs(folder: str, names: List[str]) -> List[BenchmarkRun]:
        return [BenchmarkRun.load(os.path.join(folder, name)) for name in names]

    @staticmethod
    def summary_frame(runs: List[BenchmarkRun]) -> pd.DataFrame:
        rows = []
        for run in runs:
            agg = run.aggregate
            rows.append({
                "generator": run.generator,
                "mode": run.mode.value,
                "scale": run.scale,
                "validity": agg.validity if agg else None,
                "optimality": agg.optimality if agg else None,
                "similarity": agg.similarity if agg else None,
                "partial": run.partial,
            })
        return pd.DataFrame(rows)

    @staticmethod
    def condition_frame(run: BenchmarkRun) -> pd.DataFrame:
        rows = [dict(condition=i, **(s.to_dict() if s else {}))
                for i, s in enumerate(run.per_condition)]
        return pd.DataFrame(rows)


def main():
    try:
        UIHelper.config_page()
        UIHelper.setup_sidebar()
        st.title("📊 Benchmark Reports")
        folder = st.text_input("Run folder", value=RUNS_FOLDER)
        names = ReportBrowser.list_runs(folder)
        st.sidebar.markdown(f"📁 **Runs found:** `{len(names)}`")
        if not names:
            st.info("No runs yet. Create one with "
                    "`python -m cyclescore benchmark --out runs/<name>.json`.")
            return
        selected = st.multiselect("Runs", names, default=names)
        runs = ReportBrowser.load_runs(folder, selected)
        if not runs:
            return
        st.markdown(report(runs, "table"))
        for run in runs:
            with st.expander(f"{run.generator} / {run.mode.value} per condition"):
                st.dataframe(ReportBrowser.condition_frame(run))
                for failure in run.failures:
                    st.warning(f"Condition {failure['condition']}: {failure['message']}")
    except Exception as e:
        st.error(f"Error loading reports: {str(e)}")


if __name__ == "__main__":
    main()
