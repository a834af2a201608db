"""Deployment templates: parsing, validation and topology queries.

Run from the repository root:  python demos/01_templates.py
"""

from orchsim import aggregate_demand, parse_template, topological_order, validate
from orchsim.templates import TemplateError

print("=== parse a shipped template ===")
with open("templates/repository.tpl", encoding="utf-8") as handle:
    template = parse_template(handle.read())
for name, node in template.nodes.items():
    print("  %-8s kind=%-10s image=%-16s depends_on=%s"
          % (name, node.kind, node.image or "-", list(node.depends_on) or "-"))
print("outputs:", template.outputs)

print()
print("=== deployment order (dependencies first, ties lexicographic) ===")
print(" -> ".join(topological_order(template)))

print()
print("=== aggregate placement demand ===")
with open("templates/elastic-cluster.tpl", encoding="utf-8") as handle:
    elastic = parse_template(handle.read())
demand = aggregate_demand(elastic)
print("elastic-cluster (front-end + max_workers x worker):", demand)

print()
print("=== defects are rejected with their source line ===")
broken = """\
tosca_version: indigo_subset_1
nodes:
  a:
    kind: Service
    image: web:1
    depends_on: [b]
  b:
    kind: Service
    image: db:1
    depends_on: [a]
"""
try:
    parse_template(broken)
except TemplateError as exc:
    print("rejected:", exc)
    if exc.report is not None:
        for violation in exc.report.violations:
            print("  violation: %s (%s)" % (violation.code, violation.subject))

print()
print("=== validation reports are data, not exceptions ===")
report = validate(template)
print("repository.tpl violations:", list(report.violations) or "none")
