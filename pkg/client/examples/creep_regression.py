"""Train a gradient-boosted regressor on fetched table rows and plot parity.

Mirrors the usual pipeline: pull a governed table through the API, split,
fit an external model, report error metrics. Run a local server first, e.g.

    matloop serve --port 8080 --tokens tokens.txt --data ./data

with a `viewer` token exported as MATLOOP_TOKEN.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from sklearn.ensemble import HistGradientBoostingRegressor
from sklearn.metrics import mean_absolute_error, r2_score
from sklearn.model_selection import train_test_split

from matloop_client import MatloopClient

TABLE_NAME = "iqr_dataframe"
COLUMNS = ["Nb", "Cr", "V", "W", "Zr", "Creep_Merit"]
TARGET_COL = "Creep_Merit"

with MatloopClient() as client:
    df = client.get_data_table_rows(
        tableName=TABLE_NAME,
        columns=COLUMNS,
        numRows=1000,
    ).to_dataframe()

X, y = df.drop(columns=TARGET_COL), df[TARGET_COL]
X_train, X_test, y_train, y_test = train_test_split(
    X, y, test_size=0.25, random_state=18
)

model = HistGradientBoostingRegressor(max_iter=400, learning_rate=0.05,
                                      random_state=84)
model.fit(X_train, y_train)
y_pred = model.predict(X_test)

metrics = {
    "R2": r2_score(y_test, y_pred),
    "MAE": mean_absolute_error(y_test, y_pred),
}
print("held-out metrics:", {k: round(v, 4) for k, v in metrics.items()})

fig, ax = plt.subplots(figsize=(5, 5))
ax.scatter(y_test, y_pred, alpha=0.6)
lims = [min(y_test.min(), y_pred.min()), max(y_test.max(), y_pred.max())]
ax.plot(lims, lims, "k--", lw=2, label="perfect prediction")
ax.set_xlabel(f"actual {TARGET_COL}")
ax.set_ylabel(f"predicted {TARGET_COL}")
ax.set_title(f"parity: R2={metrics['R2']:.3f}")
ax.legend()
fig.savefig("parity.png", dpi=130, bbox_inches="tight")
print("wrote parity.png")
