import numpy as np, time
from tactoform import prior, sim, refine

corpus = prior.generate_corpus(sim.default_corpus_spec())
scenes = sim.default_benchmark_scenes(n=6)

def run(sp, scene, polname, lr, seed):
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

for d, lr in [(128, 0.02), (128, 0.05), (128, 0.1)]:
    t0 = time.perf_counter()
    sp = prior.fit_prior(corpus, d)
    finals = {p: [] for p in ("active", "random", "direct-edit")}
    for scene in scenes:
        for p in finals:
            h = run(sp, scene, p, lr, 1)
            finals[p].append(h[-1])
    line = f"D{d} lr{lr}: "
    for p, v in finals.items():
        line += f" {p[:3]} med {np.median(v):.2f} mean {np.mean(v):.2f} |"
    print(line, f"({time.perf_counter()-t0:.0f}s)", flush=True)
