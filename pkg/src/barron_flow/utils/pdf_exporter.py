"""
PDF export of solve ledgers and verification reports.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from ..cli.verification import CheckStatus, VerificationCheck
from .translation import _

PALETTE = {
    "primary": colors.HexColor("#007AFF"),
    "passed": colors.HexColor("#34C759"),
    "warning": colors.HexColor("#FF9500"),
    "failed": colors.HexColor("#FF3B30"),
    "text": colors.HexColor("#1D1D1F"),
    "muted": colors.HexColor("#6E6E73"),
    "stripe": colors.HexColor("#F8F9FA"),
    "header": colors.HexColor("#E5E5EA"),
    "rule": colors.HexColor("#D1D1D6"),
}

# name -> (parent, overrides)
STYLE_SHEET: Dict[str, tuple] = {
    "ReportTitle": ("Title", dict(fontSize=22, spaceAfter=0.25 * inch, textColor="primary")),
    "ReportSubtitle": ("Normal", dict(fontSize=11, leading=15, alignment=TA_CENTER, textColor="muted", spaceAfter=0.25 * inch)),
    "Section": ("Heading2", dict(fontSize=15, spaceBefore=0.25 * inch, spaceAfter=0.12 * inch, textColor="primary")),
    "Cell": ("Normal", dict(fontSize=9, leading=12, textColor="text")),
    "Note": ("Normal", dict(fontSize=8, textColor="muted", alignment=TA_CENTER, fontName="Helvetica-Oblique")),
}

STATUS_COLORS = {
    CheckStatus.PASSED: "passed",
    CheckStatus.FAILED: "failed",
    CheckStatus.WARNING: "warning",
}


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


class ReportExporter:
    """Render solve ledgers and verification results as A4 PDF documents."""

    def __init__(self):
        self.styles = getSampleStyleSheet()
        for name, (parent, overrides) in STYLE_SHEET.items():
            resolved = {key: PALETTE.get(value, value) if key == "textColor" else value for key, value in overrides.items()}
            self.styles.add(ParagraphStyle(name=name, parent=self.styles[parent], **resolved))
        self.generated = datetime.now()

    def export_solve_summary_to_pdf(
        self,
        problem_name: str,
        ledger: Mapping[str, Any],
        summary: Mapping[str, Any],
        filename: Path,
    ) -> Path:
        """Export the constant ledger and run summary of a solve.

        Returns:
            Path to the generated PDF file
        """
        story = self._header(_("Sobolev Flow Solve Report"), problem_name)
        story.append(Paragraph(_("Run Summary"), self.styles["Section"]))
        story.append(self._table([_("Quantity"), _("Value")], [[key, value] for key, value in summary.items()]))
        story.append(Paragraph(_("Constant Ledger"), self.styles["Section"]))
        story.append(self._table([_("Quantity"), _("Value")], [[key, value] for key, value in ledger.items()]))
        return self._build(story, filename)

    def export_verification_to_pdf(
        self, checks: List[VerificationCheck], filename: Path, seed: Optional[int] = None
    ) -> Path:
        """Export verification results, one row per check.

        Returns:
            Path to the generated PDF file
        """
        subtitle = _("Seed") + f" {seed}" if seed is not None else None
        story = self._header(_("Verification Report"), subtitle)

        counts = {status: sum(1 for check in checks if check.status is status) for status in CheckStatus}
        story.append(
            Paragraph(
                _("{passed} passed, {failed} failed, {warnings} warnings of {total} checks").format(
                    passed=counts[CheckStatus.PASSED],
                    failed=counts[CheckStatus.FAILED],
                    warnings=counts[CheckStatus.WARNING],
                    total=len(checks),
                ),
                self.styles["Cell"],
            )
        )

        story.append(Paragraph(_("Checks"), self.styles["Section"]))
        rows = [[check.key, check.description, check.status.value, check.margin] for check in checks]
        table = self._table([_("Key"), _("Check"), _("Status"), _("Margin")], rows, widths=(1.3, 3.4, 0.9, 0.9))
        for row, check in enumerate(checks, start=1):
            color = PALETTE.get(STATUS_COLORS.get(check.status, ""), PALETTE["muted"])
            table.setStyle(TableStyle([("TEXTCOLOR", (2, row), (2, row), color), ("FONTNAME", (2, row), (2, row), "Helvetica-Bold")]))
        story.append(table)

        details = [check for check in checks if check.details]
        if details:
            story.append(Paragraph(_("Details"), self.styles["Section"]))
            for check in details:
                story.append(Paragraph(f"<b>{check.key}</b>: {check.details}", self.styles["Cell"]))
        return self._build(story, filename)

    def _header(self, title: str, subtitle: Optional[str]) -> list:
        text = _("Generated on") + " " + self.generated.strftime("%B %d, %Y at %H:%M")
        if subtitle:
            text += f"<br/><b>{subtitle}</b>"
        return [Paragraph(title, self.styles["ReportTitle"]), Paragraph(text, self.styles["ReportSubtitle"])]

    def _table(self, header: Sequence[str], rows: Sequence[Sequence[Any]], widths: Sequence[float] = (2.2, 4.3)) -> Table:
        body = [[Paragraph(_format_value(value), self.styles["Cell"]) for value in row] for row in rows]
        table = Table([list(header)] + body, colWidths=[w * inch for w in widths], repeatRows=1)
        table.setStyle(
            TableStyle(
                [
                    ("BACKGROUND", (0, 0), (-1, 0), PALETTE["header"]),
                    ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
                    ("FONTSIZE", (0, 0), (-1, 0), 9),
                    ("GRID", (0, 0), (-1, -1), 0.5, PALETTE["rule"]),
                    ("VALIGN", (0, 0), (-1, -1), "TOP"),
                    ("ROWBACKGROUNDS", (0, 1), (-1, -1), [colors.white, PALETTE["stripe"]]),
                ]
            )
        )
        return table

    def _build(self, story: list, filename: Path) -> Path:
        filename = Path(filename).with_suffix(".pdf")
        story.append(Spacer(1, 0.3 * inch))
        footer = _("Report generated by") + " <b>barron-flow</b> • " + self.generated.strftime("%Y-%m-%d %H:%M:%S")
        story.append(Paragraph(footer, self.styles["Note"]))
        margin = 0.75 * inch
        doc = SimpleDocTemplate(
            str(filename), pagesize=A4, leftMargin=margin, rightMargin=margin, topMargin=margin, bottomMargin=margin
        )
        doc.build(story)
        return filename
