import io
import streamlit as st  # type: ignore
import pandas as pd
from typing import Any, Mapping, Sequence
from utils.ui_helper import UIHelper
from cyclescore.conditions import DEFAULT_RIDERS, Condition
from cyclescore.design_space import DesignSchema, load_schema, read_designs_csv, sample_frame
from cyclescore.ergonomics import RiderProfile, UseCase
from cyclescore.evaluation import CONSTRAINTS, EvaluatorBundle
from cyclescore.harness import condition_embedder
from cyclescore.performance_proxies import Embedding


class DesignEvaluator:
    @staticmethod
    def load_designs(data: bytes, schema: DesignSchema) -> pd.DataFrame:
        """Parse an uploaded design CSV."""
        return read_designs_csv(io.BytesIO(data), schema)

    @staticmethod
    def build_condition(rider: Sequence[float], use_case: UseCase, target_seed: int,
                        bundle: EvaluatorBundle, text: str = "") -> Condition:
        """Condition whose target is the embedding of a seeded uniform design."""
        embedder = condition_embedder(bundle)
        target = embedder.embed_frame(sample_frame(bundle.schema, 1, target_seed))[0]
        return Condition(RiderProfile(*rider), use_case, Embedding(target), text)

    @staticmethod
    def evaluate(designs: pd.DataFrame, condition: Condition,
                 bundle: EvaluatorBundle) -> pd.DataFrame:
        frame = bundle.evaluate_frame(designs, condition).to_frame()
        frame.insert(0, "satisfied", (frame[list(CONSTRAINTS)] <= 0).all(axis=1))
        return frame


class EvaluationPage:
    def __init__(self, config: Mapping[str, Any]):
        self.schema = load_schema(config.get("schema_path"))
        self.bundle = EvaluatorBundle.default(self.schema, config)

    def rider_inputs(self):
        st.sidebar.subheader("Rider (mm)")
        values = []
        for name in RiderProfile.FIELDS:
            mean = float(DEFAULT_RIDERS[name][0])
            values.append(st.sidebar.number_input(
                name.replace("_", " ").title(), min_value=1.0, value=mean, step=5.0))
        return values

    def render(self):
        try:
            st.title("📐 Evaluate Designs")
            rider = self.rider_inputs()
            use_case = st.selectbox(
                "Use case", list(UseCase), format_func=lambda u: u.label)
            target_seed = st.number_input(
                "Target design seed", min_value=0, value=0, step=1)
            uploaded_file = st.file_uploader(
                "Upload a design CSV (one design per row)", type=["csv"])
            if uploaded_file is None:
                st.info("Upload designs to score them on all 25 criteria.")
                return
            designs = DesignEvaluator.load_designs(
                uploaded_file.getvalue(), self.schema)
            condition = DesignEvaluator.build_condition(
                rider, use_case, int(target_seed), self.bundle)
            st.caption(condition.condition_string())
            with st.spinner(f"Evaluating {len(designs)} designs..."):
                frame = DesignEvaluator.evaluate(designs, condition, self.bundle)
            st.metric("Designs satisfying every constraint",
                      f"{100 * frame['satisfied'].mean():.2f}%")
            st.dataframe(frame)
            if self.bundle.substitutes:
                st.caption("Substitute evaluators: " +
                           ", ".join(self.bundle.substitutes))
        except Exception as e:
            st.error(f"Error evaluating designs: {str(e)}")


def main():
    try:
        UIHelper.config_page()
        UIHelper.setup_sidebar()
        page = EvaluationPage(UIHelper.load_config())
        page.render()
    except Exception as e:
        st.error(f"Error in main application: {str(e)}")


if __name__ == "__main__":
    main()
