#include <chrono>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "vpx/common.hpp"
#include "vpx/pipeline.hpp"

namespace vpx {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Sample pool feeding the shared loop. Training builds get a stream for
// augmentation draws; eval builds are deterministic.
struct SamplePool {
  int count = 0;
  std::function<void(int idx, Rng& rng, Tensor* in, Tensor* tgt)> build_train;
  std::function<void(int idx, Tensor* in, Tensor* tgt)> build_eval;
};

Tensor stack_batch(const std::vector<Tensor>& parts) {
  const int n = static_cast<int>(parts.size());
  std::vector<int> shape{n};
  shape.insert(shape.end(), parts[0].shape.begin(), parts[0].shape.end());
  Tensor out(shape);
  const std::size_t per = parts[0].numel();
  for (int i = 0; i < n; ++i) {
    check(parts[i].shape == parts[0].shape, "batch samples disagree on shape");
    std::memcpy(out.ptr() + i * per, parts[i].ptr(), per * sizeof(float));
  }
  return out;
}

double validation_loss(const Model& m, const SamplePool& pool, const std::vector<int>& indices,
                       int num_joints) {
  double total = 0.0;
  for (int idx : indices) {
    Tensor in, tgt;
    pool.build_eval(idx, &in, &tgt);
    const Tensor pred = network_forward_eval(m, in);
    total += mse_loss(pred, tgt, num_joints, false).value;
  }
  return total / static_cast<double>(indices.size());
}

TrainResult run_training(Model model, int num_joints, const SamplePool& pool,
                         const TrainConfig& cfg, const TrainLog& log) {
  check(cfg.batch_size >= 1, "batch size must be at least 1");
  check(cfg.iterations >= 0, "iteration count must not be negative");
  check(cfg.learning_rate >= 0 && cfg.momentum >= 0 && cfg.weight_decay >= 0,
        "optimizer settings must not be negative");
  check(cfg.log_every >= 1, "log cadence must be at least 1");
  check(pool.count > 0, "no training samples");

  const Split split = split_frames(pool.count, cfg.validation_fraction, cfg.seed);
  Rng rng = Rng(cfg.seed).fork(1);
  SgdOptimizer opt;
  opt.momentum = static_cast<float>(cfg.momentum);
  opt.weight_decay = static_cast<float>(cfg.weight_decay);

  TrainResult res;
  res.best_iteration = cfg.iterations;
  res.best_validation_loss = -1.0;
  const auto start = Clock::now();

  std::vector<Tensor> ins(cfg.batch_size), tgts(cfg.batch_size);
  std::vector<int> batch_ids(cfg.batch_size);
  bool have_best = false;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double lr = it >= cfg.lr_step ? cfg.learning_rate * cfg.lr_decay : cfg.learning_rate;
    opt.learning_rate = static_cast<float>(lr);

    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = split.train[rng.uniform_int(split.train.size())];
      batch_ids[b] = idx;
      pool.build_train(idx, rng, &ins[b], &tgts[b]);
    }
    const Tensor input = stack_batch(ins);
    const Tensor target = stack_batch(tgts);

    ForwardCache cache;
    const Tensor pred = network_forward(model, input, true, &cache);
    const LossResult loss = mse_loss(pred, target, num_joints, true);
    if (!std::isfinite(loss.value)) {
      std::string ids;
      for (int b = 0; b < cfg.batch_size; ++b)
        ids += (b ? "," : "") + std::to_string(batch_ids[b]);
      fail("loss became non-finite at iteration " + std::to_string(it) + " (samples " + ids +
           ")");
    }
    const ParamMap grads = network_backward(model, cache, loss.grad);
    opt.step(model.params, grads);

    const bool last = it + 1 == cfg.iterations;
    if (it % cfg.log_every == 0 || last) {
      res.curve.push_back({it, loss.value});
      if (log) log({"iter", it, loss.value, lr, seconds_since(start)});
    }
    if (!split.validation.empty() && cfg.eval_every > 0 &&
        ((it + 1) % cfg.eval_every == 0 || last)) {
      const double vl = validation_loss(model, pool, split.validation, num_joints);
      if (log) log({"val", it, vl, lr, seconds_since(start)});
      if (!have_best || vl < res.best_validation_loss) {
        have_best = true;
        res.best_validation_loss = vl;
        res.best_iteration = it;
        res.best_params = model.params;
      }
    }
  }
  if (!have_best) {
    res.best_params = model.params;
    res.best_iteration = cfg.iterations;
  }
  res.wall_seconds = seconds_since(start);
  res.model = std::move(model);
  return res;
}

Tensor patch_input(const CropRecord& rec) {
  Tensor t = rec.patch;
  t.shape.insert(t.shape.begin(), 1);
  return t;
}

}  // namespace

TrainResult train_pnet(const Dataset& ds, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log) {
  check(!ds.frames.empty(), "dataset has no frames");
  const int J = static_cast<int>(ds.meta.joint_names.size());
  const int margin = p.pnet_margin;
  SamplePool pool;
  pool.count = static_cast<int>(ds.frames.size());
  pool.build_train = [&ds, &p, margin](int idx, Rng& rng, Tensor* in, Tensor* tgt) {
    const FrameData& fr = ds.frames[idx];
    const int ou = static_cast<int>(rng.uniform_int(margin + 1));
    const int ov = static_cast<int>(rng.uniform_int(margin + 1));
    *in = normalized_depth_crop(fr.depth, ds.meta.z_min_mm, ds.meta.z_max_mm, ou, ov,
                                p.pnet_input);
    *tgt = pnet_target(fr.joints, p, ou, ov);
  };
  pool.build_eval = [&ds, &p, margin](int idx, Tensor* in, Tensor* tgt) {
    const FrameData& fr = ds.frames[idx];
    *in = normalized_depth_crop(fr.depth, ds.meta.z_min_mm, ds.meta.z_max_mm, margin / 2,
                                margin / 2, p.pnet_input);
    *tgt = pnet_target(fr.joints, p, margin / 2, margin / 2);
  };
  Rng model_rng = Rng(cfg.seed).fork(0);
  return run_training(build_pnet(J, p, model_rng), J, pool, cfg, log);
}

TrainResult train_vnet(const CropSet& crops, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log) {
  check(!crops.records.empty(), "crop set is empty");
  const int J = crops.num_joints;
  const int span = p.grid_bins - p.grid_crop_bins;
  SamplePool pool;
  pool.count = static_cast<int>(crops.records.size());
  pool.build_train = [&crops, &p, span, J](int idx, Rng& rng, Tensor* in, Tensor* tgt) {
    const CropRecord& rec = crops.records[idx];
    const int offset = static_cast<int>(rng.uniform_int(span + 1));
    *in = crop_window(rec, offset, p);
    *tgt = vnet_target(rec, offset, J, p);
  };
  pool.build_eval = [&crops, &p, J](int idx, Tensor* in, Tensor* tgt) {
    const CropRecord& rec = crops.records[idx];
    *in = crop_window(rec, p.depth_crop_margin(), p);
    *tgt = vnet_target(rec, p.depth_crop_margin(), J, p);
  };
  Rng model_rng = Rng(cfg.seed).fork(0);
  return run_training(build_vnet(J, p, model_rng), J, pool, cfg, log);
}

TrainResult train_vl2d(const CropSet& crops, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log) {
  check(!crops.records.empty(), "crop set is empty");
  const int J = crops.num_joints;
  // The flat input carries no depth-window cue, so the window stays centered
  // instead of being jittered.
  const int offset = p.depth_crop_margin();
  SamplePool pool;
  pool.count = static_cast<int>(crops.records.size());
  pool.build_train = [&crops, &p, offset, J](int idx, Rng&, Tensor* in, Tensor* tgt) {
    const CropRecord& rec = crops.records[idx];
    *in = patch_input(rec);
    *tgt = vl2d_target(rec, offset, J, p);
  };
  pool.build_eval = [&crops, &p, offset, J](int idx, Tensor* in, Tensor* tgt) {
    const CropRecord& rec = crops.records[idx];
    *in = patch_input(rec);
    *tgt = vl2d_target(rec, offset, J, p);
  };
  Rng model_rng = Rng(cfg.seed).fork(0);
  return run_training(build_vl2d(J, p, model_rng), J, pool, cfg, log);
}

TrainResult train_co2d(const CropSet& crops, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log) {
  check(!crops.records.empty(), "crop set is empty");
  const int J = crops.num_joints;
  SamplePool pool;
  pool.count = static_cast<int>(crops.records.size());
  pool.build_train = [&crops, &p, J](int idx, Rng&, Tensor* in, Tensor* tgt) {
    const CropRecord& rec = crops.records[idx];
    *in = patch_input(rec);
    *tgt = co2d_target(rec, J, p);
  };
  pool.build_eval = [&crops, &p, J](int idx, Tensor* in, Tensor* tgt) {
    const CropRecord& rec = crops.records[idx];
    *in = patch_input(rec);
    *tgt = co2d_target(rec, J, p);
  };
  Rng model_rng = Rng(cfg.seed).fork(0);
  return run_training(build_co2d(J, p, model_rng), J, pool, cfg, log);
}

TrainResult train_holistic(const std::vector<HolisticSample>& samples, const Profile& p,
                           const TrainConfig& cfg, const TrainLog& log) {
  check(!samples.empty(), "no holistic samples");
  const int J = static_cast<int>(samples[0].gt_fine.size());
  const int span = p.grid_bins - p.grid_crop_bins;
  SamplePool pool;
  pool.count = static_cast<int>(samples.size());
  pool.build_train = [&samples, &p, span, J](int idx, Rng& rng, Tensor* in, Tensor* tgt) {
    const HolisticSample& s = samples[idx];
    const int offset = static_cast<int>(rng.uniform_int(span + 1));
    *in = holistic_window(s, offset, p);
    *tgt = holistic_target(s, offset, J, p);
  };
  pool.build_eval = [&samples, &p, J](int idx, Tensor* in, Tensor* tgt) {
    const HolisticSample& s = samples[idx];
    *in = holistic_window(s, p.depth_crop_margin(), p);
    *tgt = holistic_target(s, p.depth_crop_margin(), J, p);
  };
  Rng model_rng = Rng(cfg.seed).fork(0);
  return run_training(build_holistic(J, p, model_rng), J, pool, cfg, log);
}

}  // namespace vpx
