#!/usr/bin/env python3
"""Regenerates the alert fixture corpus and its manifest.

The manifest is written from the generation parameters, never by parsing
the produced files, so it can serve as an independent oracle.
"""
import os, random, shutil
from datetime import datetime, timedelta, timezone

random.seed(20040301)
HOSTS = [
    "ws1.cs.example.edu", "ws2.cs.example.edu", "db.ncsa.example.edu", "mail.ncsa.example.edu",
    "gw.net.example.edu", "lab7.ece.example.edu", "10.1.2.3", "141.142.2.8",
    "141.142.65.17", "141.142.96.4", "192.0.2.55", "198.51.100.23",
]
TYPES = ["scan", "password", "dos", "INCBAND"]
here = os.path.dirname(os.path.abspath(__file__))
inc = os.path.join(here, "incoming")
bad = os.path.join(here, "malformed")
for d in (inc, bad):
    shutil.rmtree(d, ignore_errors=True)
    os.makedirs(d)

base = datetime(2004, 3, 1, tzinfo=timezone.utc)
rows = []
# 48 unique messages; every host and type used at least once
plan = [(HOSTS[i % 12], TYPES[i % 4]) for i in range(48)]
random.shuffle(plan)
for i, (host, ty) in enumerate(plan):
    t = base + timedelta(minutes=random.randrange(0, 60 * 24 * 90))
    use_header_date = i % 5 == 0
    lines = [
        "Date: " + t.strftime("%a, %d %b %Y %H:%M:%S +0000"),
        "From: sensor%d@alerts.example.edu" % (i % 3),
        "Subject: %s alert for %s" % (ty, host),
        "",
        "HOST: " + host,
        "TYPE: " + ty,
    ]
    if not use_header_date:
        lines.append("TIME: " + t.strftime("%Y-%m-%dT%H:%M:%SZ"))
    if i % 4 == 1:
        lines.append("SRC_IP: 203.0.113.%d" % (i + 1))
    if i % 6 == 2:
        lines.append("DST_PORT: %d" % random.choice([22, 80, 443, 3306]))
    lines.append("DETAIL: fixture message %02d" % i)
    name = "alert-%02d.eml" % i
    with open(os.path.join(inc, name), "w") as f:
        f.write("\n".join(lines) + "\n")
    rows.append((name, host, ty, t.strftime("%Y-%m-%dT%H:%M:%SZ"), "-"))

# two byte-identical re-deliveries
for j, src in enumerate([7, 31]):
    name = "zz-redelivery-%d.eml" % j
    shutil.copyfile(os.path.join(inc, rows[src][0]), os.path.join(inc, name))
    rows.append((name, rows[src][1], rows[src][2], rows[src][3], rows[src][0]))

with open(os.path.join(here, "manifest.tsv"), "w") as f:
    f.write("file\thost\ttype\ttime\tduplicate_of\n")
    for r in rows:
        f.write("\t".join(r) + "\n")

malformed = {
    "bad-01-no-host.eml": "From: sensor0@alerts.example.edu\n\nTYPE: scan\nTIME: 2004-03-02T10:00:00Z\n",
    "bad-02-no-type.eml": "From: sensor0@alerts.example.edu\n\nHOST: ws1.cs.example.edu\nTIME: 2004-03-02T10:00:00Z\n",
    "bad-03-no-time.eml": "From: sensor0@alerts.example.edu\n\nHOST: ws1.cs.example.edu\nTYPE: scan\n",
    "bad-04-short-host.eml": "From: sensor0@alerts.example.edu\n\nHOST: www.example.com\nTYPE: scan\nTIME: 2004-03-02T10:00:00Z\n",
    "bad-05-empty.eml": "",
}
with open(os.path.join(here, "malformed-manifest.tsv"), "w") as f:
    f.write("file\treason_prefix\n")
    reasons = ["parse error: missing HOST", "parse error: missing TYPE", "parse error: no parseable timestamp",
               "constraint violation: invalid_host_name", "parse error: empty message"]
    for (name, body), reason in zip(sorted(malformed.items()), reasons):
        with open(os.path.join(bad, name), "w") as g:
            g.write(body)
        f.write("%s\t%s\n" % (name, reason))
