#include "cirlab/corpus.hpp"

#include "cirlab/error.hpp"
#include "cirlab/text.hpp"

namespace cirlab {

namespace {

// The escape-analysis listing: o = new A(v); CAS(o.x, v, new B(v2));
// CAS(o.x.y, v2, v3); return o.x
const char* kPeaCasMini = R"(class A { fields x; }
class B { fields y; }

fn f(v, v2, v3) {
b0:
  o = new A
  putfield o, A.x, v
  b = new B
  putfield b, B.y, v2
  ok1 = cas o, A.x, v, b
  t = getfield o, A.x
  ok2 = cas t, B.y, v2, v3
  r = getfield o, A.x
  return r
}

fn main() {
b0:
  r = call f(1, 2, 3)
  y = getfield r, B.y
  output y
  return
}

thread main()
)";

const char* kPeaLocal = R"(class Cell { fields v; }

fn main() {
b0:
  c = new Cell
  putfield c, Cell.v, 4
  ok = cas c, Cell.v, 4, 9
  x = getfield c, Cell.v
  output x
  output ok
  return
}

thread main()
)";

// fill(l, n): for (i = 0; i < n; i++) synchronized (l) { l.size++ }
const char* kCoarsenTemplate = R"(class List { fields size; }

global list = new List

fn fill(l, n) {
b0:
  br head(0)
head(i):
  more = cmplt i, n
  cbr more, body, done
body:
  monitorenter l
  s = getfield l, List.size
  s2 = add s, 1
  putfield l, List.size, s2
  monitorexit l
  i2 = add i, 1
  br head(i2)
done:
  r = getfield l, List.size
  output r
  return
}
)";

// Two retry loops on one counter: v -> v + 1, then v -> twice(v).
const char* kCoalesceTemplate = R"(class Counter { fields n; }

global counter = new Counter

fn twice(x) {
b0:
  y = mul x, 2
  return y
}

fn update(o) {
b0:
  br first
first:
  v = getfield o, Counter.n
  nv = add v, 1
  ok = cas o, Counter.n, v, nv
  cbr ok, second, first
second:
  w = getfield o, Counter.n
  nw = call twice(w)
  ok2 = cas o, Counter.n, w, nw
  cbr ok2, done, second
done:
  r = getfield o, Counter.n
  output r
  return
}

fn seeded(o, s) {
b0:
  putfield o, Counter.n, s
  call update(o)
  return
}
)";

// A thread-local seed object advanced by CAS, plus a shared seed advanced twice.
const char* kRandomMini = R"(class Seed { fields s; }

global shared = new Seed

fn step(v) {
b0:
  a = mul v, 5
  b = add a, 11
  c = mod b, 1024
  return c
}

fn main(init) {
b0:
  local = new Seed
  putfield local, Seed.s, init
  cur = getfield local, Seed.s
  n = call step(cur)
  ok = cas local, Seed.s, cur, n
  x = getfield local, Seed.s
  output x
  br first
first:
  v = getfield @shared, Seed.s
  v1 = call step(v)
  ok1 = cas @shared, Seed.s, v, v1
  cbr ok1, second, first
second:
  w = getfield @shared, Seed.s
  w1 = call step(w)
  ok2 = cas @shared, Seed.s, w, w1
  cbr ok2, done, second
done:
  r = getfield @shared, Seed.s
  output r
  return
}

thread main(7)
thread main(3)
)";

// Character histogram where every per-character operation is a lambda.
const char* kLambdaHistogramTemplate = R"(fn char_at(i) {
b0:
  a = mul i, 37
  b = add a, 11
  c = mod b, 128
  return c
}

fn is_lower(c) {
b0:
  a = cmple 97, c
  b = cmple c, 122
  r = and a, b
  return r
}

fn is_upper(c) {
b0:
  a = cmple 65, c
  b = cmple c, 90
  r = and a, b
  return r
}

fn is_digit(c) {
b0:
  a = cmple 48, c
  b = cmple c, 57
  r = and a, b
  return r
}

fn inc(x) {
b0:
  y = add x, 1
  return y
}

fn main(n) {
b0:
  counts = newarray 4
  hc = handleconst char_at
  hk = mov hc
  hl = handleconst is_lower
  hu = handleconst is_upper
  hd = handleconst is_digit
  hi = handleconst inc
  br head(0)
head(i):
  more = cmplt i, n
  cbr more, body, done
body:
  ch = callhandle hk(i)
  l = callhandle hl(ch)
  u = callhandle hu(ch)
  d = callhandle hd(ch)
  s1 = select d, 2, 3
  s2 = select u, 1, s1
  k = select l, 0, s2
  old = aload counts, k
  new1 = callhandle hi(old)
  astore counts, k, new1
  i2 = add i, 1
  br head(i2)
done:
  c0 = aload counts, 0
  output c0
  c1 = aload counts, 1
  output c1
  c2 = aload counts, 2
  output c2
  c3 = aload counts, 3
  output c3
  return
}
)";

// for (i = 0; i < n; i++) { if (0 <= i) { guard(0 <= i < len); acc += i } }
const char* kGuardLoopTemplate = R"(fn scan(n, len) {
b0:
  br head(0, 0)
head(i, acc):
  more = cmplt i, n
  cbr more, check, done
check:
  nonneg = cmple 0, i
  cbr nonneg, guarded, skip
guarded:
  lo = cmple 0, i
  hi = cmplt i, len
  inside = and lo, hi
  guard inside, bounds
  a2 = add acc, i
  br latch(a2)
skip:
  br latch(acc)
latch(a):
  i2 = add i, 1
  br head(i2, a)
done:
  output acc
  return
}
)";

// c[i] = a[i] + b[i] behind three bounds guards; inputs come from an LCG.
const char* kVaddTemplate = R"(fn vadd(a, b, c, n) {
b0:
  la = alen a
  lb = alen b
  lc = alen c
  br head(0)
head(i):
  more = cmplt i, n
  cbr more, body, done
body:
  ga = cmplt i, la
  guard ga, bounds_a
  gb = cmplt i, lb
  guard gb, bounds_b
  gc = cmplt i, lc
  guard gc, bounds_c
  x = aload a, i
  y = aload b, i
  s = add x, y
  astore c, i, s
  i2 = add i, 1
  br head(i2)
done:
  return
}

fn main(n, seed) {
b0:
  a = newarray n
  b = newarray n
  c = newarray n
  br fill(0, seed)
fill(i, s):
  more = cmplt i, n
  cbr more, fbody, run
fbody:
  s1 = mul s, 1103515245
  s2 = add s1, 12345
  s3 = mod s2, 65536
  astore a, i, s3
  s4 = mul s3, 31
  s5 = add s4, 7
  s6 = mod s5, 65536
  astore b, i, s6
  i2 = add i, 1
  br fill(i2, s6)
run:
  call vadd(a, b, c, n)
  br emit(0)
emit(j):
  left = cmplt j, n
  cbr left, ebody, end
ebody:
  v = aload c, j
  output v
  j2 = add j, 1
  br emit(j2)
end:
  return
}
)";

// if (x instanceof C) a() else b(); if (x instanceof C) c()
const char* kInstanceofDiamond = R"(class Shape { }
class C extends Shape { }

fn a() {
b0:
  output 1
  return
}

fn b() {
b0:
  output 2
  return
}

fn c() {
b0:
  output 3
  return
}

fn test(x) {
b0:
  t = instanceof x, C
  cbr t, then, else
then:
  call a()
  br merge
else:
  call b()
  br merge
merge:
  t2 = instanceof x, C
  cbr t2, again, end
again:
  call c()
  br end
end:
  return
}

fn main() {
b0:
  x = new C
  call test(x)
  y = new Shape
  call test(y)
  return
}

thread main()
)";

// The false side of the first check is also reached without testing, so only
// the true side learns the outcome.
const char* kInstanceofPartial = R"(class Shape { }
class C extends Shape { }

fn a() {
b0:
  output 1
  return
}

fn b() {
b0:
  output 2
  return
}

fn c() {
b0:
  output 3
  return
}

fn test(x, k) {
b0:
  neg = cmplt k, 0
  cbr neg, else, probe
probe:
  t = instanceof x, C
  cbr t, then, else
then:
  call a()
  br merge
else:
  call b()
  br merge
merge:
  t2 = instanceof x, C
  cbr t2, again, end
again:
  call c()
  br end
end:
  return
}

fn main() {
b0:
  x = new C
  call test(x, 1)
  y = new Shape
  call test(y, 1)
  call test(x, -1)
  return
}

thread main()
)";

const char* kRacingOutputs = R"(fn say(v) {
b0:
  output v
  return
}

thread say(1)
thread say(2)
)";

// Workers fold points into shared centroid sums under one lock.
const char* kKmeansTemplate = R"(class Acc { fields sum, count; }

global acc = new Acc

fn worker(a, lo, hi) {
b0:
  br head(lo)
head(i):
  more = cmplt i, hi
  cbr more, body, done
body:
  monitorenter a
  m = mul i, 7
  v = mod m, 10
  s = getfield a, Acc.sum
  s2 = add s, v
  putfield a, Acc.sum, s2
  c = getfield a, Acc.count
  c2 = add c, 1
  putfield a, Acc.count, c2
  monitorexit a
  i2 = add i, 1
  br head(i2)
done:
  r = getfield a, Acc.count
  output r
  return
}
)";

// One-slot buffer handed between a producer and a consumer with wait/notify.
const char* kProducerConsumerTemplate = R"(class Box { fields full, val; }

global box = new Box

fn producer(bx, n) {
b0:
  br head(0)
head(i):
  more = cmplt i, n
  cbr more, body, done
body:
  monitorenter bx
  f = getfield bx, Box.full
  busy = cmpeq f, 1
  cbr busy, wait_empty, put
wait_empty:
  wait bx
  br put
put:
  putfield bx, Box.val, i
  putfield bx, Box.full, 1
  notifyall bx
  monitorexit bx
  i2 = add i, 1
  br head(i2)
done:
  return
}

fn consumer(bx, n) {
b0:
  br head(0)
head(i):
  more = cmplt i, n
  cbr more, body, done
body:
  monitorenter bx
  f = getfield bx, Box.full
  empty = cmpeq f, 0
  cbr empty, wait_full, take
wait_full:
  wait bx
  br take
take:
  v = getfield bx, Box.val
  output v
  putfield bx, Box.full, 0
  notifyall bx
  monitorexit bx
  i2 = add i, 1
  br head(i2)
done:
  return
}
)";

const char* kShapesVirtual = R"(class Shape { fields w, h; methods area, scale; }
class Rect extends Shape { methods area; }
class Square extends Rect { methods area; }
class Circle extends Shape { fields r; methods area, perimeter; }

fn Shape.area(self) {
b0:
  return 0
}

fn Shape.scale(self, k) {
b0:
  w = getfield self, Shape.w
  w2 = mul w, k
  putfield self, Shape.w, w2
  h = getfield self, Shape.h
  h2 = mul h, k
  putfield self, Shape.h, h2
  return
}

fn Rect.area(self) {
b0:
  w = getfield self, Shape.w
  h = getfield self, Shape.h
  a = mul w, h
  return a
}

fn Square.area(self) {
b0:
  w = getfield self, Shape.w
  a = mul w, w
  return a
}

fn Circle.area(self) {
b0:
  r = getfield self, Circle.r
  r2 = mul r, r
  a = mul r2, 3
  return a
}

fn Circle.perimeter(self) {
b0:
  r = getfield self, Circle.r
  p = mul r, 6
  return p
}

fn main() {
b0:
  r = new Rect
  putfield r, Shape.w, 3
  putfield r, Shape.h, 4
  a1 = callvirtual r, area()
  output a1
  s = new Square
  putfield s, Shape.w, 5
  callvirtual s, scale(2)
  a2 = callvirtual s, area()
  output a2
  c = new Circle
  putfield c, Circle.r, 2
  a3 = callvirtual c, area()
  output a3
  p = callvirtual c, perimeter()
  output p
  return
}

thread main()
)";

std::string with_threads(const char* body, const std::string& threads) { return std::string(body) + "\n" + threads; }

std::vector<CorpusEntry> build() {
  std::vector<CorpusEntry> c;
  auto add = [&](CorpusEntry e) {
    if (e.small_source.empty()) e.small_source = e.source;
    c.push_back(std::move(e));
  };

  add({"pea-cas-mini", "escape-analysis listing: CAS on fields of non-escaping objects", kPeaCasMini, "",
       {{{}, "pea_atomic", Opcode::Cas, true}}, {}});
  add({"pea-local", "thread-local cell updated by CAS and read back", kPeaLocal, "",
       {{{}, "pea_atomic", Opcode::New, true}}, {}});
  {
    PassOptions small;
    small.chunk = 2;
    add({"coarsen-mini", "synchronized list fill loop",
         with_threads(kCoarsenTemplate, "thread fill(@list, 100)\n"),
         with_threads(kCoarsenTemplate, "thread fill(@list, 6)\nthread fill(@list, 6)\n"),
         {{{}, "lock_coarsen", Opcode::MonitorEnter, true}}, small});
  }
  add({"coalesce-mini", "two CAS retry loops on one counter",
       with_threads(kCoalesceTemplate, "thread update(@counter)\nthread update(@counter)\n"), "",
       {{{}, "atomic_coalesce", Opcode::Cas, true}}, {}});
  add({"random-mini", "java.util.Random-like seeds: a local seed and a shared double-advanced seed", kRandomMini, "",
       {{{}, "pea_atomic", Opcode::Cas, true}, {{"pea_atomic"}, "atomic_coalesce", Opcode::Cas, true}}, {}});
  add({"lambda-histogram", "character histogram driven by method handles",
       with_threads(kLambdaHistogramTemplate, "thread main(40)\n"),
       with_threads(kLambdaHistogramTemplate, "thread main(8)\n"),
       {{{}, "handle_simplify", Opcode::CallHandle, true}}, {}});
  add({"guard-loop", "bounds guard under an always-true branch in a counted loop",
       with_threads(kGuardLoopTemplate, "thread scan(1000, 2000)\n"),
       with_threads(kGuardLoopTemplate, "thread scan(6, 8)\n"),
       {{{}, "guard_motion", Opcode::Guard, true}}, {}});
  add({"vadd", "c[i] = a[i] + b[i] with bounds guards",
       with_threads(kVaddTemplate, "thread main(64, 42)\n"),
       with_threads(kVaddTemplate, "thread main(8, 42)\n"),
       {{{}, "guard_motion", Opcode::Guard, true},
        {{"guard_motion"}, "loop_vectorize", Opcode::ArrayStore, true}},
       {}});
  add({"instanceof-diamond", "two instanceof tests of one value around a merge", kInstanceofDiamond, "",
       {{{}, "dup_simulate", Opcode::InstanceOf, true}}, {}});
  add({"instanceof-partial", "merge where only one predecessor knows the check outcome", kInstanceofPartial, "",
       {{{}, "dup_simulate", Opcode::InstanceOf, true}}, {}});
  add({"racing-outputs", "two threads racing to print", kRacingOutputs, "", {}, {}});
  {
    PassOptions small;
    small.chunk = 2;
    add({"fj-kmeans-mini", "workers accumulating into shared sums under a lock",
         with_threads(kKmeansTemplate, "thread worker(@acc, 0, 64)\nthread worker(@acc, 64, 128)\n"),
         with_threads(kKmeansTemplate, "thread worker(@acc, 0, 3)\nthread worker(@acc, 3, 6)\n"),
         {{{}, "lock_coarsen", Opcode::MonitorEnter, true}}, small});
  }
  add({"producer-consumer", "one-slot buffer with wait/notify",
       with_threads(kProducerConsumerTemplate, "thread producer(@box, 5)\nthread consumer(@box, 5)\n"),
       with_threads(kProducerConsumerTemplate, "thread producer(@box, 2)\nthread consumer(@box, 2)\n"),
       {{{}, "lock_coarsen", Opcode::MonitorEnter, false}}, {}});
  add({"shapes-virtual", "small class hierarchy with virtual calls", kShapesVirtual, "", {}, {}});
  return c;
}

} // namespace

const std::vector<CorpusEntry>& corpus() {
  static const std::vector<CorpusEntry> entries = build();
  return entries;
}

const CorpusEntry& corpus_entry(std::string_view name) {
  for (const auto& e : corpus()) {
    if (e.name == name) return e;
  }
  throw Error("unknown corpus program '" + std::string(name) + "'");
}

Program load(const CorpusEntry& entry, bool small) { return parse_program(small ? entry.small_source : entry.source); }

} // namespace cirlab
