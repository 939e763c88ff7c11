#include "densea/lstm.hpp"

namespace densea {

LstmState lstm_zero_state(Tape& t, int hidden) {
  return {make_zero_mat(t, 1, hidden), make_zero_mat(t, 1, hidden)};
}

LstmState lstm_step(Tape& t, const Mat& x, const LstmState& prev, const LstmRefs& w) {
  const int in = x.cols;
  const int h = prev.h.cols;
  if (x.rows != 1 || prev.h.rows != 1 || prev.c.rows != 1)
    throw DimensionError("lstm_step: want row vectors");
  if (w.Wx.rows != 4 * h || w.Wx.cols != in || w.Wh.rows != 4 * h || w.Wh.cols != h ||
      w.b.cols != 4 * h || prev.c.cols != h)
    throw DimensionError("lstm_step: weight shapes disagree with state");

  std::vector<NodeId> z(4 * h);
  for (int j = 0; j < 4 * h; ++j) {
    NodeId zx = t.dot(x.base, 1, w.Wx.id(j, 0), 1, in);
    NodeId zh = t.dot(prev.h.base, 1, w.Wh.id(j, 0), 1, h);
    z[j] = t.add(t.add(zx, zh), w.b.id(j));
  }

  std::vector<NodeId> ig(h), fg(h), gg(h), og(h);
  for (int j = 0; j < h; ++j) ig[j] = t.sigmoid(z[j]);
  for (int j = 0; j < h; ++j) fg[j] = t.sigmoid(z[h + j]);
  for (int j = 0; j < h; ++j) gg[j] = t.tanh(z[2 * h + j]);
  for (int j = 0; j < h; ++j) og[j] = t.sigmoid(z[3 * h + j]);

  std::vector<NodeId> fc(h), in_g(h);
  for (int j = 0; j < h; ++j) {
    fc[j] = t.mul(fg[j], prev.c.id(j));
    in_g[j] = t.mul(ig[j], gg[j]);
  }
  Mat c{kNoNode, 1, h};
  for (int j = 0; j < h; ++j) {
    NodeId id = t.add(fc[j], in_g[j]);
    if (j == 0) c.base = id;
  }
  std::vector<NodeId> tc(h);
  for (int j = 0; j < h; ++j) tc[j] = t.tanh(c.id(j));
  Mat hm{kNoNode, 1, h};
  for (int j = 0; j < h; ++j) {
    NodeId id = t.mul(og[j], tc[j]);
    if (j == 0) hm.base = id;
  }
  return {hm, c};
}

}  // namespace densea
