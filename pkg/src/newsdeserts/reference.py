"""Published reference coefficient sets for the shipped model variants.

These are the released 2018->2023 fits; they seed simulations, provide
default coefficients for the CLI ``simulate`` command, and anchor the
recovery tests. Order matches the design-matrix column layout.
"""

EXPLANATORY_COEFFS = {
    "(Intercept)": -3.708,
    "popseg<20K:lnPop": 0.3577,
    "popseg<20K:age": 0.01092,
    "popseg<20K:lnHisp": 0.008160,
    "popseg<20K:lnBlack": -0.1250,
    "popseg<20K:HHincome": 7.159e-6,
    "popseg20-300K": 0.4712,
    "popseg20-300K:lnPop": 0.3508,
    "popseg20-300K:age": 0.005068,
    "popseg20-300K:lnHisp": -0.03864,
    "popseg20-300K:lnBlack": -0.1232,
    "popseg20-300K:HHincome": 1.765e-6,
    "popseg300K+": -8.046,
    "popseg300K+:lnPop": 0.8865,
    "popseg300K+:age": 0.04574,
    "popseg300K+:lnHisp": -0.1122,
    "popseg300K+:lnBlack": -0.02780,
    "popseg300K+:HHincome": 5.208e-6,
}

FORECASTING_COEFFS = {
    "(Intercept)": -1.719,
    "popseg<20K:ln(lagpub+1)": 1.608,
    "popseg<20K:lnPop": 0.04240,
    "popseg<20K:age": 0.002283,
    "popseg<20K:lnHisp": -0.002599,
    "popseg<20K:lnBlack": -0.002930,
    "popseg<20K:HHincome": 0.5399e-6,
    "popseg20-300K": 0.6230,
    "popseg20-300K:ln(lagpub+1)": 1.297,
    "popseg20-300K:lnPop": 0.01584,
    "popseg20-300K:age": 0.001569,
    "popseg20-300K:lnHisp": -0.004181,
    "popseg20-300K:lnBlack": -0.005516,
    "popseg20-300K:HHincome": 0.2165e-6,
    "popseg300K+": 1.443,
    "popseg300K+:ln(lagpub+1)": 1.047,
    "popseg300K+:lnPop": -0.05795,
    "popseg300K+:age": 0.005171,
    "popseg300K+:lnHisp": 0.06493,
    "popseg300K+:lnBlack": 0.06100,
    "popseg300K+:HHincome": 2.035e-6,
}


FORECASTING_SES = {
    "(Intercept)": 0.5101,
    "popseg<20K:ln(lagpub+1)": 0.07229,
    "popseg<20K:lnPop": 0.04205,
    "popseg<20K:age": 0.005543,
    "popseg<20K:lnHisp": 0.02889,
    "popseg<20K:lnBlack": 0.02595,
    "popseg<20K:HHincome": 2.554e-6,
    "popseg20-300K": 0.6185,
    "popseg20-300K:ln(lagpub+1)": 0.04456,
    "popseg20-300K:lnPop": 0.03010,
    "popseg20-300K:age": 0.004062,
    "popseg20-300K:lnHisp": 0.02397,
    "popseg20-300K:lnBlack": 0.01967,
    "popseg20-300K:HHincome": 1.621e-6,
    "popseg300K+": 0.9084,
    "popseg300K+:ln(lagpub+1)": 0.04701,
    "popseg300K+:lnPop": 0.05369,
    "popseg300K+:age": 0.007817,
    "popseg300K+:lnHisp": 0.04061,
    "popseg300K+:lnBlack": 0.03559,
    "popseg300K+:HHincome": 1.499e-6,
}


def coefficient_vector(mapping, columns):
    """Arrange a name->value mapping to match a design's column order."""
    missing = [c for c in columns if c not in mapping]
    if missing:
        raise KeyError("no reference value for columns: %s" % ", ".join(missing))
    return [mapping[c] for c in columns]
