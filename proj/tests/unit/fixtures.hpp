#pragma once

#include "fctf/auxnets.hpp"
#include "fctf/dataset.hpp"
#include "fctf/trainer.hpp"

namespace fctf::test {

/// 10 identities (8/1/1 split), 4 clips of 30 frames, held in memory.
inline const data::Dataset& tiny_dataset() {
  static const data::Dataset ds = [] {
    synth::CorpusSpec spec;
    spec.identities = 10;
    spec.clips_per_identity = 4;
    spec.frames_per_clip = 30;
    spec.corpus_seed = 11;
    return data::Dataset::synthesize(spec);
  }();
  return ds;
}

/// Aux nets after a few pretraining steps; enough to mark them trained.
inline const aux::AuxNets& tiny_aux() {
  static const aux::AuxNets a = [] {
    aux::PretrainOptions o;
    o.sync_steps = 3;
    o.sync_batch = 8;
    o.id_steps = 3;
    o.id_batch = 8;
    o.eval_pairs = 20;
    const auto& ds = tiny_dataset();
    aux::AuxNets n(static_cast<int>(ds.identities_in(synth::Split::Train).size()), 5);
    aux::train_syncnet(n, ds, o);
    aux::train_id_embedder(n, ds, o);
    n.sync_trained = n.id_trained = true;
    return n;
  }();
  return a;
}

inline train::TrainConfig tiny_config(int steps = 2) {
  train::TrainConfig c;
  c.steps = steps;
  c.batch_size = 2;
  c.min_source_gap = 10;
  c.checkpoint_every = 1000;
  return c;
}

}  // namespace fctf::test
