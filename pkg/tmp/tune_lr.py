import numpy as np, time, sys
from tactoform import prior, sim, refine

t0 = time.perf_counter()
corpus = prior.generate_corpus(sim.default_corpus_spec())
sp = prior.fit_prior(corpus, 64)
del corpus
scenes = sim.default_benchmark_scenes(n=6)
print(f"setup {time.perf_counter()-t0:.0f}s", flush=True)

def run(scene, polname, lr, seed):
    ep = sim.Episode(scene, sp, polname, seed=seed)
    hist = [ep.steps[0].cd_norm]
    for _ in range(10):
        plan = ep.select_plan()
        rec = sim.execute_touch(scene, plan, ep.lut)
        ep.constraints.add(rec)
        if polname == "direct-edit":
            ep.grid = refine.direct_edit(ep.grid, ep.constraints)
        else:
            zeros, ones = ep.constraints.targets()
            ep.z = refine.descend(sp, ep.z, zeros, ones, steps=10, lr=lr)
            ep.grid = sp.decode(ep.z, scene.frame)
        hist.append(ep._chamfer()[1])
    return hist

for lr in (0.02, 0.05, 0.1):
    finals = {p: [] for p in ("active", "random", "direct-edit")}
    worsen = []
    for scene in scenes:
        for seed in (1, 2):
            for p in finals:
                h = run(scene, p, lr, seed)
                finals[p].append(h[-1])
                if p == "active":
                    worsen.append(sum(1 for a, b in zip(h, h[1:]) if b > a + 1e-9))
    line = f"lr {lr}: "
    for p, v in finals.items():
        line += f" {p[:3]} med {np.median(v):.3f} mean {np.mean(v):.3f} |"
    print(line, "active worsening-steps/10:", worsen, flush=True)
