from convoher2.visualization.curves import CurveArtifacts, load_series, plot_curves, save_series

__all__ = ["CurveArtifacts", "load_series", "plot_curves", "save_series"]
