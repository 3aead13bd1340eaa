import matplotlib.pyplot as plt
import numpy as np


def plotGaze2D(X, y, labels=None, ax=None, legends=None, title=None, screen=(1920, 1080)):
    '''
    Scatter gaze locations in screen coordinates, one colour per label
    (workload level). The y axis points down as on the display.

    Parameters
    ----------
    X : array [n, 2] of (x, y) gaze positions
    y : array [n] of labels
    '''
    X = np.asarray(X)
    y = np.asarray(y)
    colors = ['blue', 'red', 'black', 'orange', 'green', 'cyan', 'purple', 'gray']

    if ax is None:
        _, ax = plt.subplots(figsize=(6, 3.6))

    if labels is None:
        labels = sorted(set(y.tolist()))

    for i, label in enumerate(labels):
        cluster = X[np.where(y == label)]
        ax.scatter(cluster[:, 0], cluster[:, 1],
                   s=2,
                   color=colors[i % len(colors)],
                   label=(str(legends[i]) if legends is not None else
                          'workload ' + str(label) + ' (' + str(len(cluster)) + ')'),
                   alpha=.2)

    ax.set_xlim(0, screen[0])
    ax.set_ylim(screen[1], 0)
    if title:
        ax.set_title(title)
    ax.legend(markerscale=5)
    return ax
