// Minimal canvas line chart: Chamfer distance against touch count.

export interface ChartSeries {
  x: number[];
  y: number[];
}

export function drawChart(canvas: HTMLCanvasElement, series: ChartSeries,
                          label: string) {
  const ctx = canvas.getContext("2d")!;
  const w = canvas.width, h = canvas.height;
  const pad = 34;
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, w, h);
  ctx.strokeStyle = "#555";
  ctx.strokeRect(pad, 8, w - pad - 8, h - pad - 8);
  if (series.x.length === 0) return;

  const xMax = Math.max(1, ...series.x);
  const yMax = Math.max(...series.y) * 1.08 || 1;
  const toX = (x: number) => pad + (x / xMax) * (w - pad - 8);
  const toY = (y: number) => 8 + (1 - y / yMax) * (h - pad - 16);

  ctx.strokeStyle = "#4dd2ff";
  ctx.lineWidth = 2;
  ctx.beginPath();
  series.x.forEach((x, i) => {
    const px = toX(x), py = toY(series.y[i]);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  ctx.fillStyle = "#4dd2ff";
  series.x.forEach((x, i) => {
    ctx.beginPath();
    ctx.arc(toX(x), toY(series.y[i]), 3, 0, 2 * Math.PI);
    ctx.fill();
  });

  ctx.fillStyle = "#aab";
  ctx.font = "11px sans-serif";
  ctx.fillText(label, pad + 4, h - 8);
  ctx.fillText(yMax.toPrecision(3), 2, 16);
  ctx.fillText("0", 2, h - pad + 4);
  series.x.forEach((x) => {
    ctx.fillText(String(x), toX(x) - 3, h - pad + 14);
  });
}
