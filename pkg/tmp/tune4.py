import numpy as np
from tactoform import frames, prior, rays, refine, sim

corpus = prior.generate_corpus(prior.ShapeCorpusSpec(count_per_family=50,
                                                     resolution=64, seed=11))
sp = prior.fit_prior(corpus, 200)
del corpus
all_scenes = sim.default_benchmark_scenes(n=10)
# box sigma1, bottle sigma1, sphere sigma3, cone sigma3
scenes = [all_scenes[0], all_scenes[3], all_scenes[7], all_scenes[9]]


def touch_with_depth(scene, plan, lut, extra_mult):
    if extra_mult is None:
        return sim.execute_touch(scene, plan, lut)
    normal = plan.normal / np.linalg.norm(plan.normal)
    t_center = float(np.linalg.norm(plan.center_world - plan.approach_start))
    t_limit = t_center + extra_mult * t_center
    frame = scene.frame
    dims = scene.truth.dims
    occ = scene.truth.values >= 0.5
    origin_v = frames.world_to_voxel(frame, plan.approach_start)
    dir_v = frames.world_to_voxel(frame, plan.approach_start + normal) - origin_v
    ray_cells = []
    contact = None
    for cell, t_in, _ in rays.traverse_ray(dims, origin_v, dir_v, t_max=t_limit):
        if occ[cell[0], cell[1], cell[2]]:
            contact = tuple(int(c) for c in cell)
            break
        ray_cells.append(cell)
    ray_cells = (np.array(ray_cells, dtype=np.int64).reshape(-1, 3)
                 if ray_cells else np.empty((0, 3), np.int64))
    if contact is None:
        return refine.TouchRecord(hit=False, normal=normal, ray_cells=ray_cells)
    return refine.TouchRecord(hit=True, normal=normal, ray_cells=ray_cells,
                              contact=contact)


def run(scene, polname, lr, anchor, extra_mult, seed):
    ep = sim.Episode(scene, sp, polname, seed=seed)
    for _ in range(10):
        plan = ep.select_plan()
        rec = touch_with_depth(scene, plan, ep.lut, extra_mult)
        ep.constraints.add(rec)
        if polname == "direct-edit":
            ep.grid = refine.direct_edit(ep.grid, ep.constraints)
        else:
            if anchor:
                zeros, ones = ep._anchored_targets()
            else:
                zeros, ones = ep.constraints.targets()
            ep.z = refine.descend(sp, ep.z, zeros, ones, steps=10, lr=lr)
            ep.grid = sp.decode(ep.z, scene.frame)
    return ep.steps[0].cd_sum, ep._chamfer()[0]


for (lr, anchor, deep) in [(0.02, False, None), (0.01, True, 1.2),
                           (0.01, False, 1.2), (0.02, True, 1.2)]:
    finals = {p: [] for p in ("active", "random")}
    for scene in scenes:
        for seed in (1, 2):
            for p in finals:
                c0, c10 = run(scene, p, lr, anchor, deep, seed)
                finals[p].append(c10)
    med = {p: np.median(v) for p, v in finals.items()}
    print(f"lr{lr} anchor={anchor} deep={deep}: "
          f"act {med['active']:.0f} ran {med['random']:.0f} "
          f"(means {np.mean(finals['active']):.0f}"
          f"/{np.mean(finals['random']):.0f})", flush=True)
