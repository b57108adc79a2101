"""Streamlit explorer for the asymptotic quality gain of weighted recombination."""

from dotenv import load_dotenv

# Load environment variables FIRST (QGAIN_CACHE_DIR, QGAIN_WORKERS)
load_dotenv()

import logging

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
    datefmt='%H:%M:%S'
)
logger = logging.getLogger(__name__)

import numpy as np
import pandas as pd
import streamlit as st

from qgain.config import SPECTRA
from qgain.errors import QGainError
from qgain.tools.moment_cache import MomentCache, MomentKey
from qgain.tools.order_stats import MomentMethod, build_moment_table, default_first_method, default_mc_samples
from qgain.tools.quadratic import make_model
from qgain.tools.theory import TheoryInputs, error_bound, phi_hat, phi_inf, sigma_bar_star_general
from qgain.tools.weights import lipschitz_bounds, make_weights
from qgain.utils.error_analyzer import ErrorAnalyzer
from qgain.utils.plotting import quality_gain_figure


@st.cache_data(show_spinner=False)
def load_moments(lam: int, exact: bool):
    """Moment table for the explorer; product moments go through the on-disk cache."""
    if not exact:
        return build_moment_table(lam, default_first_method(lam))
    samples = default_mc_samples(lam)
    key = MomentKey(lam, MomentMethod.MONTE_CARLO, samples, 1)
    return MomentCache().get_or_compute(
        key, lambda: build_moment_table(lam, MomentMethod.MONTE_CARLO, with_e2=True, samples=samples, seed=1)
    )


def quality_gain_curves(lam, scheme, mu, spectrum, dim, alpha, c_m, exact, points=200):
    moments = load_moments(lam, exact)
    weights = make_weights(scheme, lam, e1=moments.e1, mu=mu)
    model = make_model({"type": spectrum, "dim": dim, "alpha": alpha})
    base = TheoryInputs.from_model(model, weights, moments, 0.0, c_m, allow_large_lambda=not exact)
    s_star = sigma_bar_star_general(weights, moments, base.e_Ae, "exact" if exact else "large_lambda")

    lipschitz = lipschitz_bounds(weights)
    sigma_bars = np.linspace(0.0, 3.0 * max(s_star, 1e-12), points)
    rows = []
    for s in sigma_bars:
        inputs = base.with_sigma_bar(float(s))
        bound = error_bound(inputs, lipschitz)
        rows.append({
            "sigma_bar": s,
            "phi_inf": phi_inf(s, weights, moments.e1),
            "phi_hat": phi_hat(inputs),
            "bound": bound.bound,
        })
    return pd.DataFrame(rows), s_star, weights, base


# Page configuration
st.set_page_config(
    page_title="qgain explorer",
    page_icon="📈",
    layout="wide"
)

st.title("📈 Quality Gain Explorer")
st.markdown("""
Normalized quality gain of a weighted-recombination ES on a convex quadratic, as a function of
the normalized step-size σ̄. The shaded band is the error bound around the asymptotic prediction φ̂.
""")

with st.sidebar:
    st.header("⚙️ Configuration")
    lam = st.number_input("Population size λ", min_value=2, max_value=100_000, value=10, step=1)
    scheme = st.selectbox("Weights", ("optimal", "optimal_positive", "cma_log", "truncation"))
    mu = None
    if scheme == "truncation":
        mu = st.number_input("μ", min_value=1, max_value=int(lam), value=max(1, int(lam) // 4))
    spectrum = st.selectbox("Spectrum", [s for s in SPECTRA if s != "custom"])
    dim = st.number_input("Dimension N", min_value=1, max_value=100_000, value=100, step=1)
    alpha = st.number_input("α", min_value=1.0, value=1e6, format="%e")
    c_m = st.number_input("c_m", min_value=0.01, value=1.0)
    exact = st.checkbox(
        "Exact product moments (Monte Carlo, cached)",
        value=False,
        help="Otherwise wᵀE2w is replaced by its large-λ limit (wᵀE1)²",
    )

    st.divider()
    st.markdown("""
    ### 🎯 What you see
    - φ̄∞: the sphere limit N → ∞
    - φ̂: the prediction for the chosen spectrum, worst-case eᵀÂe
    - σ̄*: the asymptotically optimal normalized step-size
    """)

try:
    with st.spinner("Computing moments..."):
        table, s_star, weights, inputs = quality_gain_curves(
            int(lam), scheme, int(mu) if mu else None, spectrum, int(dim), float(alpha), float(c_m), exact
        )

    fig = quality_gain_figure(
        table["sigma_bar"].to_numpy(),
        [("φ̂", table["phi_hat"].to_numpy()), ("φ̄∞", table["phi_inf"].to_numpy())],
        sigma_bar_star=s_star,
        band=(table["phi_hat"] - table["bound"], table["phi_hat"] + table["bound"]),
    )
    st.pyplot(fig)

    col1, col2, col3, col4 = st.columns(4)
    col1.metric("σ̄*", f"{s_star:.4g}")
    col2.metric("φ̂(σ̄*)", f"{phi_hat(inputs.with_sigma_bar(s_star)):.4g}")
    col3.metric("μ_w", f"{weights.mu_w:.4g}")
    col4.metric("eᵀÂe (worst case)", f"{inputs.e_Ae:.3g}")

    with st.expander("📊 Curve data"):
        st.dataframe(table, width='stretch')

except QGainError as e:
    analysis = ErrorAnalyzer.analyze_error(e, "explorer")
    logger.error(f"❌ {analysis['error_type']}: {e}")
    st.error(f"**{analysis['error_type']}:** {e}")
    st.info(analysis["suggested_fix"])

st.divider()
st.markdown("""
<div style='text-align: center; color: gray;'>
    Built with qgain • Run full experiments with the <code>qgain</code> command
</div>
""", unsafe_allow_html=True)
