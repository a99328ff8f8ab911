import streamlit as st  # type: ignore
from utils.ui_helper import UIHelper
from cyclescore.design_space import ParameterKind, load_schema
from cyclescore.evaluation import CONSTRAINTS, OBJECTIVES


class BenchmarkDashboard:
    def __init__(self):
        UIHelper.config_page()
        self.config = UIHelper.load_config()
        self.schema = load_schema(self.config.get("schema_path"))

    def parameter_summary(self):
        return {kind.value: len(self.schema.of_kind(kind)) for kind in ParameterKind}

    def run(self):
        st.title("🚲 Bike Design Benchmark")
        UIHelper.setup_sidebar()
        try:
            st.markdown(
                "Score bicycle designs on performance, ergonomics, aesthetics "
                "and feasibility, and compare design generators on validity, "
                "optimality and similarity to the dataset."
            )
            left, right = st.columns(2)
            with left:
                st.subheader(f"Design space: {len(self.schema)} parameters")
                st.table(self.parameter_summary())
            with right:
                st.subheader(f"{len(OBJECTIVES)} objectives, {len(CONSTRAINTS)} constraints")
                st.dataframe({"Objective (minimised)": list(OBJECTIVES)}, hide_index=True)
                st.dataframe({"Constraint (<= 0 is satisfied)": list(CONSTRAINTS)}, hide_index=True)
        except Exception as e:
            st.error(f"Error loading the design space: {str(e)}")


if __name__ == "__main__":
    dashboard = BenchmarkDashboard()
    dashboard.run()
