"""Smoke test for the queuesense extension: simulate, extract, train, classify, evaluate."""

import queuesense

cfg = queuesense.Config("[scenario]\nduration_s = 600.0\n[evaluate]\nclassifiers = [\"random_forest\"]\n")
cfg.seed = 3

trace = queuesense.simulate(cfg)
assert len(trace) > 0
assert trace.labels()

features = queuesense.extract(trace, cfg)
rows = features.rows()
assert rows and all(len(r[2]) == 9 and r[3] in ("in_queue", "not_in_queue") for r in rows)

model = queuesense.train(features, cfg)
assert model.kind == "random_forest"
again = queuesense.Model.from_json(model.to_json())
assert again.predict(features) == model.predict(features)
assert len(model.classify_trace(trace)) == len(rows)

copy = queuesense.Features.from_tsv(features.to_tsv())
assert len(copy) == len(features)
reparsed = queuesense.Trace.from_tsv(trace.to_tsv(), cfg, trace.labels_tsv())
assert len(reparsed) == len(trace)

reports = queuesense.evaluate(features, cfg)
assert len(reports) == 1 and 0.0 <= reports[0]["accuracy"] <= 1.0

try:
    queuesense.Config("[pipeline]\nalpha = 2.0\n")
except ValueError:
    pass
else:
    raise AssertionError("invalid config accepted")

print(f"ok: {len(trace)} packets, {len(rows)} rows, accuracy {reports[0]['accuracy']:.3f}")
