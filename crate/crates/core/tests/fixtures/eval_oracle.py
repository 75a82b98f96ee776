import math
lines = open("eval_test.txt").read().splitlines()[1:]
truth = []
for l in lines:
    f = l.split(" ")[0]
    truth.append(set(int(x) for x in f.split(",")) if f else set())
preds = []
for l in open("eval_pred.txt").read().splitlines():
    d = {}
    for tok in l.split("\t"):
        if tok:
            a, b = tok.split(":"); d[int(a)] = float(b)
    preds.append(d)
for skip in (False, True):
    for k in (1, 2, 3, 5):
        ps, ns, c = 0, 0, 0
        for t, d in zip(truth, preds):
            if skip and not t: continue
            c += 1
            r = sorted(d, key=lambda l: (-d[l], l))[:k]
            ps += sum(1 for l in r if l in t) / k
            if t:
                dcg = sum(1/math.log2(i+2) for i, l in enumerate(r) if l in t)
                ideal = sum(1/math.log2(i+2) for i in range(min(k, len(t))))
                ns += dcg/ideal
        print(skip, k, "P=%.2f" % (100*ps/c), "N=%.2f" % (100*ns/c))
