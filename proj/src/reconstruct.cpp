#include "simtforge/reconstruct.hpp"

#include <algorithm>
#include <set>

#include "simtforge/cfg.hpp"

namespace simtforge {

namespace {

struct Candidate {
  int block = -1;
};

int find_candidate(const Function& f, const UniformityMap& u,
                   const std::set<std::string>& created) {
  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);
  PostDomTree pd = compute_postdom_tree(f, cfg);
  Cdg cdg = build_cdg(f, cfg, pd);
  LoopForest lf = build_loop_forest(f, cfg, dom);

  std::set<int> protected_blocks;
  protected_blocks.insert(pd.exit_block);
  for (auto& loop : lf.loops) {
    protected_blocks.insert(loop.header);
    if (loop.preheader >= 0) protected_blocks.insert(loop.preheader);
    for (int e : loop.exit_blocks) protected_blocks.insert(e);
  }

  for (int b : dom.rpo) {
    if (created.count(cfg.labels[b])) continue;
    if (protected_blocks.count(b)) continue;
    if (cfg.preds[b].size() < 2) continue;
    if (!cdg.is_leaf(b)) continue;
    std::set<int> controller_blocks(cdg.controllers[b].begin(),
                                    cdg.controllers[b].end());
    if (controller_blocks.size() < 2) continue;
    bool any_divergent = false;
    for (int c : controller_blocks)
      if (u.branch(f.blocks[c].label) == BranchState::DivergentBranch)
        any_divergent = true;
    if (!any_divergent) continue;
    if (f.blocks[b].term.op != Opcode::Br) continue;  // a leaf rejoins one successor
    return b;
  }
  return -1;
}

void duplicate_block(Function& f, int target, std::set<std::string>& created,
                     ReconstructStats& stats) {
  Cfg cfg = build_cfg(f);
  const Block snapshot = f.blocks[target];
  const std::string d_label = snapshot.label;
  const std::string succ_label = snapshot.term.operands[0].name;
  std::vector<std::string> pred_labels;
  for (int p : cfg.preds[target]) pred_labels.push_back(cfg.labels[p]);
  std::sort(pred_labels.begin(), pred_labels.end());

  std::string merge_label = f.fresh_label(d_label + ".merge");
  created.insert(merge_label);

  // copy table per value defined in the block: copy label -> local name
  struct ValueCopies {
    std::string name;
    std::vector<std::pair<std::string, std::string>> copies;  // (block, local name)
  };
  std::vector<ValueCopies> values;
  for_each_instruction(snapshot, [&](const Instruction& ins) {
    if (ins.has_result()) values.push_back({ins.result, {{d_label, ins.result}}});
  });

  // the original keeps the first predecessor; each further one gets a clone
  std::vector<Block> clones;
  std::vector<std::string> copy_labels{d_label};
  for (size_t pi = 1; pi < pred_labels.size(); ++pi) {
    const std::string& p_label = pred_labels[pi];
    std::string c_label = f.fresh_label(d_label + ".dup");
    created.insert(c_label);
    copy_labels.push_back(c_label);

    std::unordered_map<std::string, std::string> rename;
    for (auto& vc : values) {
      std::string fresh = f.fresh_value(vc.name + ".dup");
      rename[vc.name] = fresh;
    }
    Block clone = clone_block(snapshot, c_label, rename);
    for (auto& phi : clone.phis) {
      const Operand* in = phi_incoming(phi, p_label);
      std::string keep = in ? in->name : "";
      std::string result = phi.result;
      phi.operands.clear();
      phi.operands.push_back(Operand::value(keep));
      phi.operands.push_back(Operand::label(p_label));
      phi.result = result;
    }
    clone.term.operands[0] = Operand::label(merge_label);
    stats.pass.inserted += static_cast<int>(clone.phis.size() + clone.body.size() + 1);
    stats.duplicated_blocks += 1;

    for (auto& vc : values) vc.copies.push_back({c_label, rename.at(vc.name)});
    retarget(f.block(p_label)->term, d_label, c_label);
    clones.push_back(std::move(clone));
  }

  // the original now serves only its first predecessor
  {
    Block* orig = f.block(d_label);
    for (size_t pi = 1; pi < pred_labels.size(); ++pi)
      for (auto& phi : orig->phis) phi_remove_incoming(phi, pred_labels[pi]);
    orig->term.operands[0] = Operand::label(merge_label);
  }

  // merge block: one phi per value needed beyond the copies, then the rejoin
  Block merge;
  merge.label = merge_label;
  merge.term = {Opcode::Br, "", {Operand::label(succ_label)}};
  stats.pass.inserted += 1;

  auto needs_merge = [&](const std::string& name) {
    for (auto& b : f.blocks) {
      if (b.label == d_label) continue;
      bool found = false;
      for_each_instruction(b, [&](const Instruction& ins) {
        for (auto& o : ins.operands)
          if (o.kind == Operand::Kind::Value && o.name == name) found = true;
      });
      if (found) return true;
    }
    return false;
  };

  std::unordered_map<std::string, std::string> merged_name;
  for (auto& vc : values) {
    if (!needs_merge(vc.name)) continue;
    Instruction phi;
    phi.op = Opcode::Phi;
    phi.result = f.fresh_value(vc.name + ".m");
    for (auto& [blk, local] : vc.copies) {
      phi.operands.push_back(Operand::value(local));
      phi.operands.push_back(Operand::label(blk));
    }
    merge.phis.push_back(phi);
    stats.pass.inserted += 1;
    merged_name[vc.name] = phi.result;
  }

  // successor phis now see the merge block instead of the original
  {
    Block* succ = f.block(succ_label);
    for (auto& phi : succ->phis) {
      const Operand* in = phi_incoming(phi, d_label);
      if (!in) continue;
      std::string w = in->name;
      auto mi = merged_name.find(w);
      phi_remove_incoming(phi, d_label);
      phi.operands.push_back(
          Operand::value(mi == merged_name.end() ? w : mi->second));
      phi.operands.push_back(Operand::label(merge_label));
    }
  }

  // rewrite every remaining external use through the merge phi
  for (auto& [orig, merged] : merged_name) {
    for (auto& b : f.blocks) {
      if (b.label == d_label || b.label == merge_label) continue;
      bool is_copy = std::find(copy_labels.begin(), copy_labels.end(), b.label) !=
                     copy_labels.end();
      if (is_copy) continue;
      auto fix = [&](Instruction& ins) {
        for (auto& o : ins.operands)
          if (o.kind == Operand::Kind::Value && o.name == orig) o.name = merged;
      };
      for (auto& p : b.phis) fix(p);
      for (auto& i : b.body) fix(i);
      fix(b.term);
    }
  }

  int at = f.block_index(d_label);
  f.blocks.insert(f.blocks.begin() + at + 1, std::make_move_iterator(clones.begin()),
                  std::make_move_iterator(clones.end()));
  f.blocks.insert(f.blocks.begin() + f.block_index(d_label) +
                      static_cast<int>(copy_labels.size()),
                  std::move(merge));
}

}  // namespace

ReconstructStats reconstruct_cfg(Function& f, const UniformityMap& u) {
  ReconstructStats stats;
  std::set<std::string> created;
  for (int guard = 0; guard < 256; ++guard) {
    int target = find_candidate(f, u, created);
    if (target < 0) return stats;
    created.insert(f.blocks[target].label);
    duplicate_block(f, target, created, stats);
  }
  throw PassError("recon", "reconstruction did not converge");
}

}  // namespace simtforge
