"""Record /v1 responses from a live in-process service into JSON fixtures."""
import json, pathlib, tempfile
from fastapi.testclient import TestClient
from protoforge.datagen import DataConfig, generate_dataset, load_manifest, load_split
from protoforge.model import TrainConfig, train, encode_samples
from protoforge.refinery import Session, VersionStore, build_cache
from protoforge.service import AppState, create_app
from protoforge.video import VideoRecord

out = pathlib.Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"
work = pathlib.Path(tempfile.mkdtemp())
generate_dataset(DataConfig(train_samples=40, test_samples=20, seed=7), work / "data")
manifest = load_manifest(work / "data" / "manifest.json")
train_s = load_split(manifest, "train")
test_s = load_split(manifest, "test")
enc_train = encode_samples(train_s)
enc_test = encode_samples(test_s)
model = train(enc_train, TrainConfig(protos_per_class=3, epochs=10, seed=7))
marks = {s.sample_id: s.landmarks for s in list(train_s) + list(test_s)}
sess = Session(model, build_cache(model, enc_train, "train"),
               build_cache(model, enc_test, "test"), marks,
               store=VersionStore(work / "store"))
samples_by_id = {s.sample_id: s for s in list(train_s) + list(test_s)}
groups = {}
for s in samples_by_id.values():
    groups.setdefault(s.source_id, []).append(s)
videos = {vid: VideoRecord.from_samples(vid, sorted(g, key=lambda s: s.frame_index))
          for vid, g in groups.items()}
state = AppState(session=sess, videos=videos, samples_by_id=samples_by_id,
                 render_dir=work / "renders")
c = TestClient(create_app(state))

def rec(name, resp):
    assert resp.status_code == 200, (name, resp.status_code, resp.text)
    (out / f"{name}.json").write_text(json.dumps(resp.json(), indent=1, sort_keys=True))
    return resp.json()

models = rec("models", c.get("/v1/models"))
mid = sess.model.id
rec("metrics", c.get(f"/v1/models/{mid}/metrics"))
protos = rec("prototypes", c.get(f"/v1/models/{mid}/prototypes"))
pid = protos[0]["id"]
rec("prototype_detail", c.get(f"/v1/prototypes/{pid}/detail"))
rec("candidates", c.get(f"/v1/prototypes/{pid}/candidates?count=8"))
rec("embedding", c.get(f"/v1/embedding?proto_id={pid}&count=10"))
rec("landmark_density", c.get(f"/v1/models/{mid}/landmark_density"))
vids = rec("videos", c.get("/v1/videos"))
vid = vids[0]["id"]
trace = rec("trace", c.get(f"/v1/videos/{vid}/trace"))
end = vids[0]["frame_count"] - 1
agg = rec("aggregate", c.get(f"/v1/videos/{vid}/aggregate?start=0&end={end}"))
rec("aggregate_window1", c.get(f"/v1/videos/{vid}/aggregate?start=10&end=12"))
report = rec("refine_report", c.post(
    f"/v1/models/{mid}/refine",
    json={"op": {"kind": "delete", "delete_ids": [pid]}, "dry_run": True}))
rec("commit_response", c.post(f"/v1/models/{mid}/commit",
                              json={"token": report["token"]}))
(out / "meta.json").write_text(json.dumps(
    {"model_id": mid, "proto_id": pid, "video_id": vid,
     "full_range": [0, end], "window1_range": [10, 12]}, indent=1))
print("fixtures written:", sorted(p.name for p in out.iterdir()))
