#pragma once

#include <vector>

#include "rsn/model.hpp"
#include "rsn/probes.hpp"
#include "rsn/tokenizer.hpp"

namespace fixture {

// Hand-wired one-layer model over the vocabulary {<pad>, <bos>, x, obj, wrong}.
// Attention is zero. The two FFN neurons (up columns 0 and 1) each push the
// residual towards "obj"; with both silenced the model answers "wrong". The
// prompt "x" is therefore answered correctly unless both neurons are masked.
struct OrGate {
  rsn::Tokenizer tokenizer{{"<pad>", "<bos>", "x", "obj", "wrong"}};
  rsn::TinyLM model;
  rsn::NeuronId a{rsn::NeuronKind::up, 0, 0};
  rsn::NeuronId b{rsn::NeuronKind::up, 0, 1};
  std::vector<rsn::PromptInstance> prompts{{"r", "x", "obj", "x", rsn::Split::eva}};

  OrGate() {
    rsn::ModelConfig c{1, 4, 1, 2, 5, 8};
    model = rsn::TinyLM(c);
    auto& p = model.params();
    p.tok_emb(2, 0) = 1.0f;  // x
    p.tok_emb(3, 0) = 1.0f;  // obj, so the second step behaves like the first
    p.tok_emb(1, 2) = 1.0f;  // bos
    auto& l = p.layers[0];
    l.attn_norm.setOnes();
    l.ffn_norm.setOnes();
    l.w_gate(0, 0) = l.w_gate(0, 1) = 5.0f;
    l.w_up(0, 0) = l.w_up(0, 1) = 1.0f;
    l.w_down(0, 1) = l.w_down(1, 1) = 1.0f;
    p.final_norm.setOnes();
    p.lm_head(1, 3) = 1.0f;  // coordinate 1 -> obj
    p.lm_head(0, 4) = 1.0f;  // coordinate 0 -> wrong
  }
};

}  // namespace fixture

#include "rsn/pipeline.hpp"

namespace fixture {

// A run small enough to train in seconds: three relations (one sibling
// pair) of 60 facts and a 2-layer model.
inline rsn::RunConfig small_run_config() {
  rsn::RunConfig c;
  c.seed = 7;
  auto& w = c.world;
  std::vector<rsn::RelationSpec> keep;
  for (auto r : w.relations)
    if (r.name == "company_hq" || r.name == "person_father" || r.name == "person_mother") {
      r.n_facts = 60;
      r.object_cardinality = 8;
      keep.push_back(r);
    }
  w.relations = keep;
  c.model.n_layers = 2;
  c.model.d_model = 32;
  c.model.n_heads = 2;
  c.model.d_ff = 64;
  c.train.steps = 400;
  c.train.batch_size = 32;
  c.train.warmup = 20;
  c.train.lr = 1e-2;
  c.train.log_every = 100;
  c.pipeline.n_eva = 10;
  c.pipeline.n_random_seeds = 3;
  c.pipeline.n_identification_seeds = 2;
  return c;
}

}  // namespace fixture
