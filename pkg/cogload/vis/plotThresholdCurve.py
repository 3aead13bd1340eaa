import matplotlib.pyplot as plt


def plotThresholdCurve(curves, metric='f1', ax=None, title=None):
    '''
    Plot a metric against the decision threshold, one line per model.

    Parameters
    ----------
    curves : dict of label -> DataFrame with columns tau, precision, recall, f1
    metric : column to plot
    '''
    colors = ['black', 'red', 'blue', 'orange', 'green', 'purple', 'cyan', 'gray']
    styles = ['-', '--', '-.', ':']

    if ax is None:
        _, ax = plt.subplots(figsize=(6, 4))

    for i, (label, curve) in enumerate(curves.items()):
        ax.plot(curve['tau'], curve[metric], color=colors[i % len(colors)],
                linestyle=styles[i % len(styles)], label=str(label))

    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel('decision threshold')
    ax.set_ylabel(metric.upper() if metric == 'f1' else metric)
    if title:
        ax.set_title(title)
    ax.legend()
    return ax
