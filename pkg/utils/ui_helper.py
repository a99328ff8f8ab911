import streamlit as st  # type: ignore
from cyclescore.config import Settings


class UIHelper:
    @staticmethod
    def config_page():
        st.set_page_config(
            page_title='Bike Design Benchmark',
            layout='wide',
            initial_sidebar_state='expanded',
            page_icon="🚲",
            menu_items={
                'Get Help': 'https://streamlit.io/',
                'About': 'Evaluate bicycle designs and browse benchmark runs.'
            }
        )

    @staticmethod
    def setup_sidebar():
        with st.sidebar:
            st.header("Bike Design Benchmark")
            st.page_link("streamlit_app.py", label="Home", icon="🏠")

            with st.expander("Designs & Runs", expanded=True):
                st.page_link("pages/design_evaluation.py",
                             label="Evaluate Designs", icon="📐")
                st.page_link("pages/benchmark_report.py",
                             label="Benchmark Reports", icon="📊")

    @staticmethod
    def load_config():
        """Merged engine config, cached for the session."""
        if 'cyclescore_config' not in st.session_state:
            st.session_state['cyclescore_config'] = Settings.load_config()
        return st.session_state['cyclescore_config']
