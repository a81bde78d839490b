# %% [markdown]
# # Live ingest: replaying a recording through the server
#
# The server takes newline-delimited six-channel frames over TCP, keeps a
# tumbling 6000-sample buffer per channel and raises an alert whenever a
# channel switches between spawning and quiet. Replaying a file should give
# the same alerts as running the offline detector on it.

# %%
import tempfile
from pathlib import Path

from gapewatch.detector import DetectorConfig, detect_events
from gapewatch.ingest import IngestServer, alerts_from_verdicts, parse_csv, replay
from gapewatch.signal_core import extract_channel
from gapewatch.synth import make_corpus, write_corpus_csv

workdir = Path(tempfile.mkdtemp())
corpus = make_corpus(6, 0.5, seed=11, duration_s=3600)
path = workdir / "corpus.csv"
write_corpus_csv(path, corpus)
records = parse_csv(path).records
print("spawning channels:", [s.channel_id for s in corpus if s.is_spawning])

# %%
received = []
with IngestServer("127.0.0.1:0", DetectorConfig(), received.append) as server:
    replay(records, server.address)
    server.wait_for_connections(1, timeout=60)
for a in received:
    print(a.to_json())

# %%
offline = []
for c in range(1, 7):
    res = detect_events(extract_channel(records, c), DetectorConfig())
    offline += alerts_from_verdicts(c, res.verdicts)
key = lambda a: (a.channel_id, a.window_start_ms)
print("online == offline:", sorted(received, key=key) == sorted(offline, key=key))
