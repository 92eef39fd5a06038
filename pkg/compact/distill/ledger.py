import csv
from dataclasses import dataclass, astuple, fields
from pathlib import Path

from compact.exceptions import CompactError, DatasetError

LEDGER_COLUMNS = ('step', 'epoch', 'instance_id', 'teacher_id', 's_mi', 's_cons', 's_ppl', 'score', 'alpha',
                  'l_sft', 'l_mcon', 'l_total', 'l_final')


@dataclass(frozen=True)
class LedgerRow:
    step: int
    epoch: int
    instance_id: str
    teacher_id: str
    s_mi: float
    s_cons: float
    s_ppl: float
    score: float
    alpha: float
    l_sft: float
    l_mcon: float
    l_total: float
    l_final: float


class MetricLedger(object):
    """
    只追加的逐步记录, 每个 (step, teacher) 一行, step 为 instance 访问的全局序号
    """

    def __init__(self):
        self.rows = []
        self._last_step = -1

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, MetricLedger) and self.rows == other.rows

    def append(self, step, epoch, bundle, reports, l_final):
        if step <= self._last_step:
            raise CompactError('ledger steps must increase, got {} after {}'.format(step, self._last_step))
        for k, tid in enumerate(bundle.teacher_ids):
            r = reports[k]
            self.rows.append(LedgerRow(step, epoch, bundle.instance_id, tid, float(bundle.s_mi[k]),
                                       float(bundle.s_cons[k]), float(bundle.s_ppl[k]), float(bundle.score[k]),
                                       float(bundle.alpha[k]), r.l_sft, r.l_mcon, r.l_total, float(l_final)))
        self._last_step = step

    @property
    def teacher_ids(self):
        seen = []
        for r in self.rows:
            if r.teacher_id not in seen:
                seen.append(r.teacher_id)
        return seen

    def steps(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.step, []).append(r)
        return out

    def save_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(LEDGER_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
        return path

    @classmethod
    def load_csv(cls, path):
        ledger = cls()
        types = [f.type for f in fields(LedgerRow)]
        try:
            f = open(path, 'r', encoding='utf-8', newline='')
        except OSError as e:
            raise DatasetError('cannot read ledger {}: {}'.format(path, e))
        with f:
            reader = csv.reader(f)
            header = next(reader, None)
            if tuple(header or ()) != LEDGER_COLUMNS:
                raise DatasetError('ledger header {} does not match {}'.format(header, list(LEDGER_COLUMNS)), row=1)
            for lineno, values in enumerate(reader, start=2):
                try:
                    row = LedgerRow(*[t(v) for t, v in zip(types, values)])
                except (TypeError, ValueError) as e:
                    raise DatasetError(str(e), row=lineno)
                if row.step < ledger._last_step:
                    raise DatasetError('step {} after {}'.format(row.step, ledger._last_step), row=lineno)
                ledger.rows.append(row)
                ledger._last_step = row.step
        return ledger
