import numpy as np, time
from tactoform import prior, sim, refine

def run(sp, scene, polname, lr, seed):
    ep = sim.Episode(scene, sp, polname, seed=seed)
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
    return ep.steps[0].cd_norm, ep._chamfer()[1]

# bigger corpus for D=200
spec = prior.ShapeCorpusSpec(count_per_family=50, resolution=64, seed=11)
corpus = prior.generate_corpus(spec)
for d in (200,):
    t0=time.perf_counter()
    sp = prior.fit_prior(corpus, d)
    print(f"D{d} fit {time.perf_counter()-t0:.0f}s rank {sp.rank}", flush=True)
    for sigma in (1.0, 2.5):
        scenes = sim.default_benchmark_scenes(n=6, sigma=sigma)
        finals = {p: [] for p in ("active", "random", "direct-edit")}
        inits = []
        for scene in scenes:
            for seed in (1, 2):
                for p in finals:
                    c0, c10 = run(sp, scene, p, 0.02, seed)
                    finals[p].append(c10)
                    if p == "active": inits.append(c0)
        line = f"D{d} sig{sigma}: init med {np.median(inits):.2f} |"
        for p, v in finals.items():
            line += f" {p[:3]} med {np.median(v):.2f} mean {np.mean(v):.2f} |"
        print(line, flush=True)
