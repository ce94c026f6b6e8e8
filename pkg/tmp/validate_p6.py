import numpy as np, time
from tactoform import prior, sim

t0 = time.perf_counter()
corpus = prior.generate_corpus(prior.ShapeCorpusSpec(count_per_family=50, resolution=64, seed=11))
sp = prior.fit_prior(corpus, 200)
del corpus
scenes = sim.default_benchmark_scenes(n=10)
print(f"setup {time.perf_counter()-t0:.0f}s", flush=True)

finals = {p: [] for p in ("active", "random", "direct-edit")}
for scene in scenes:
    for seed in (1, 2, 3):
        for p in finals:
            t0 = time.perf_counter()
            ep = sim.run_episode(scene, sp, p, 10, seed=seed)
            finals[p].append(ep.steps[-1].cd_sum)
            print(f"{scene.name} {p} s{seed}: {ep.steps[0].cd_sum:.0f} -> "
                  f"{ep.steps[-1].cd_sum:.0f} ({time.perf_counter()-t0:.0f}s)", flush=True)
print("=== medians of cd_sum at touch 10")
for p, v in finals.items():
    print(f"{p}: median {np.median(v):.1f} mean {np.mean(v):.1f}")
act, ran, dir_ = (np.median(finals[p]) for p in ("active", "random", "direct-edit"))
print("P6 active<random:", act < ran, " refine<direct:", act < dir_)
