import numpy as np
from tactoform import prior, sim, refine

corpus = prior.generate_corpus(sim.default_corpus_spec())
sp = prior.fit_prior(corpus, 64)
del corpus
scenes = sim.default_benchmark_scenes(n=4)

for scene in scenes:
    occ = scene.truth.values >= 0.5
    for polname in ("active", "random"):
        ep = sim.Episode(scene, sp, polname, seed=1)
        hits = 0; contacts = []; losses = []
        for _ in range(10):
            plan = ep.select_plan()
            rec = sim.execute_touch(scene, plan, ep.lut)
            ep.constraints.add(rec)
            zeros, ones = ep.constraints.targets()
            losses.append(refine.constraint_loss(sp, ep.z, zeros, ones))
            if rec.hit:
                hits += 1
                contacts.append(rec.contact)
            ep.z = refine.descend(sp, ep.z, zeros, ones, steps=10, lr=0.02)
            ep.grid = sp.decode(ep.z, scene.frame)
        spread = 0.0
        if len(contacts) > 1:
            c = np.array(contacts, float)
            spread = float(np.linalg.norm(c - c.mean(0), axis=1).mean())
        print(f"{scene.name} {polname:6s} hits {hits}/10 spread {spread:5.1f} "
              f"cd {ep.steps[0].cd_norm:.2f}->{ep._chamfer()[1]:.2f} "
              f"losses {[round(l,2) for l in losses[:5]]}", flush=True)
